//! Exact one-dimensional natural breaks (Fisher–Jenks) by dynamic
//! programming, plus an exhaustive reference used by the tests.
//!
//! Both routes are generic over [`Scalar`], so instances with integer or
//! rational values can be solved in exact arithmetic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Inputs accepted by the exhaustive search.
pub const BRUTE_FORCE_MAX: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreaksResult<T> {
    /// Cluster of each input value (original order); clusters are numbered
    /// by increasing value.
    pub assignments: Vec<usize>,
    /// Sorted positions where clusters `1..L` start.
    pub boundaries: Vec<usize>,
    /// Total within-cluster sum of squared deviations.
    pub ssd: T,
    /// Inputs in ascending order (stable by original index).
    pub sorted: Vec<T>,
}

impl<T: Scalar> BreaksResult<T> {
    pub fn num_clusters(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Smallest and largest value of every cluster.
    pub fn cluster_ranges(&self) -> Vec<(T, T)> {
        let mut starts = vec![0];
        starts.extend(&self.boundaries);
        let mut ends = self.boundaries.clone();
        ends.push(self.sorted.len());
        starts
            .iter()
            .zip(&ends)
            .map(|(&s, &e)| (self.sorted[s], self.sorted[e - 1]))
            .collect()
    }
}

fn sort_with_index<T: Scalar>(values: &[T]) -> Result<(Vec<usize>, Vec<T>)> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let mut failed = false;
    idx.sort_by(|&a, &b| {
        values[a].partial_cmp(&values[b]).unwrap_or_else(|| {
            failed = true;
            std::cmp::Ordering::Equal
        })
    });
    if failed {
        return Err(Error::param("values must be totally ordered (no NaN)"));
    }
    let sorted = idx.iter().map(|&i| values[i]).collect();
    Ok((idx, sorted))
}

fn check_clusters(n: usize, clusters: usize) -> Result<()> {
    if clusters < 1 || clusters > n {
        return Err(Error::param(format!(
            "cluster count {clusters} must lie in [1, {n}]"
        )));
    }
    Ok(())
}

fn finish<T: Scalar>(order: Vec<usize>, sorted: Vec<T>, boundaries: Vec<usize>, ssd: T) -> BreaksResult<T> {
    let mut assignments = vec![0; sorted.len()];
    let mut cluster = 0;
    for (pos, &orig) in order.iter().enumerate() {
        while cluster < boundaries.len() && pos >= boundaries[cluster] {
            cluster += 1;
        }
        assignments[orig] = cluster;
    }
    BreaksResult {
        assignments,
        boundaries,
        ssd,
        sorted,
    }
}

/// Prefix sums giving the SSD of any sorted slice in O(1).
struct Prefix<T> {
    sum: Vec<T>,
    sum_sq: Vec<T>,
}

impl<T: Scalar> Prefix<T> {
    fn new(sorted: &[T]) -> Self {
        let mut sum = vec![T::zero()];
        let mut sum_sq = vec![T::zero()];
        for &v in sorted {
            sum.push(*sum.last().unwrap() + v);
            sum_sq.push(*sum_sq.last().unwrap() + v * v);
        }
        Self { sum, sum_sq }
    }

    /// SSD of sorted[start..end], `end > start`.
    fn ssd(&self, start: usize, end: usize) -> T {
        let s = self.sum[end] - self.sum[start];
        let sq = self.sum_sq[end] - self.sum_sq[start];
        let cost = sq - s * s / T::from_count(end - start);
        // floating cancellation can leave a tiny negative residue
        if cost < T::zero() {
            T::zero()
        } else {
            cost
        }
    }
}

/// Optimal partition of `values` into `clusters` contiguous groups of the
/// sorted order, minimising total within-group SSD. Among optimal
/// partitions the lexicographically smallest boundary vector is returned.
pub fn fisher_jenks<T: Scalar>(values: &[T], clusters: usize) -> Result<BreaksResult<T>> {
    let n = values.len();
    check_clusters(n, clusters)?;
    let (order, sorted) = sort_with_index(values)?;
    let prefix = Prefix::new(&sorted);

    // suffix[j][i]: best cost of splitting sorted[i..] into j groups;
    // cut[j][i]: smallest start of the second group achieving it.
    let mut suffix: Vec<Vec<Option<T>>> = vec![vec![None; n + 1]; clusters + 1];
    let mut cut = vec![vec![0usize; n + 1]; clusters + 1];
    for i in 0..n {
        suffix[1][i] = Some(prefix.ssd(i, n));
    }
    for j in 2..=clusters {
        // need at least j values left
        for i in 0..=(n - j) {
            let mut best: Option<(usize, T)> = None;
            for c in (i + 1)..=(n - j + 1) {
                let Some(rest) = suffix[j - 1][c] else { continue };
                let cost = prefix.ssd(i, c) + rest;
                if best.is_none_or(|(_, b)| cost < b) {
                    best = Some((c, cost));
                }
            }
            if let Some((c, cost)) = best {
                suffix[j][i] = Some(cost);
                cut[j][i] = c;
            }
        }
    }

    let ssd = suffix[clusters][0].expect("clusters <= n");
    let mut boundaries = Vec::with_capacity(clusters - 1);
    let mut start = 0;
    for j in (2..=clusters).rev() {
        start = cut[j][start];
        boundaries.push(start);
    }
    Ok(finish(order, sorted, boundaries, ssd))
}

fn direct_ssd<T: Scalar>(xs: &[T]) -> T {
    let mean = xs.iter().copied().sum::<T>() / T::from_count(xs.len());
    xs.iter().map(|&v| (v - mean) * (v - mean)).sum()
}

/// Exhaustive search over every placement of `clusters - 1` boundaries,
/// scanning boundary vectors in lexicographic order and keeping the first
/// minimum. Limited to [`BRUTE_FORCE_MAX`] values.
pub fn brute_force_breaks<T: Scalar>(values: &[T], clusters: usize) -> Result<BreaksResult<T>> {
    let n = values.len();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::param(format!(
            "brute force limited to {BRUTE_FORCE_MAX} values, got {n}"
        )));
    }
    check_clusters(n, clusters)?;
    let (order, sorted) = sort_with_index(values)?;
    let k = clusters - 1;
    let mut cuts: Vec<usize> = (1..=k).collect();
    let mut best: Option<(Vec<usize>, T)> = None;
    loop {
        let mut edges = vec![0];
        edges.extend(&cuts);
        edges.push(n);
        let cost: T = edges.windows(2).map(|w| direct_ssd(&sorted[w[0]..w[1]])).sum();
        if best.as_ref().is_none_or(|(_, b)| cost < *b) {
            best = Some((cuts.clone(), cost));
        }
        // next combination of k positions from 1..n-1 in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                let (b, ssd) = best.expect("at least one partition");
                return Ok(finish(order, sorted, b, ssd));
            }
            i -= 1;
            if cuts[i] < n - k + i {
                cuts[i] += 1;
                for j in i + 1..k {
                    cuts[j] = cuts[j - 1] + 1;
                }
                break;
            }
        }
    }
}
