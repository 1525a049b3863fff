//! Calibrators that rescale score columns: prior thresholding, the
//! old/new batch-mean ratio and the count-cluster (natural breaks) ratio.

use serde::{Deserialize, Serialize};

use crate::breaks::fisher_jenks;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{argmax, Real};

/// Default upper bound on the number of count clusters tried.
pub const FJ_MAX_CLUSTERS: usize = 8;

/// Divides every class probability by its prior `n_i / sum(n)`.
pub fn apply_threshold<T: Real>(probs: &Matrix<T>, counts: &[usize]) -> Result<Matrix<T>> {
    if probs.cols() != counts.len() {
        return Err(Error::param(format!(
            "{} score columns for {} class counts",
            probs.cols(),
            counts.len()
        )));
    }
    if counts.contains(&0) {
        return Err(Error::param("class counts must be positive"));
    }
    let total = T::from_count(counts.iter().sum());
    let factors: Vec<T> = counts.iter().map(|&n| total / T::from_count(n)).collect();
    Ok(scale_columns(probs, &factors))
}

fn scale_columns<T: Real>(scores: &Matrix<T>, factors: &[T]) -> Matrix<T> {
    let mut out = scores.clone();
    for i in 0..out.rows() {
        for (v, &f) in out.row_mut(i).iter_mut().zip(factors) {
            *v *= f;
        }
    }
    out
}

/// Mean ground-truth score of the samples whose label satisfies `keep`.
fn mean_true_score<T: Real>(scores: &Matrix<T>, labels: &[usize], keep: impl Fn(usize) -> bool) -> Option<T> {
    let mut sum = T::zero();
    let mut n = 0;
    for (row, &l) in scores.iter_rows().zip(labels) {
        if keep(l) {
            sum += row[l];
            n += 1;
        }
    }
    (n > 0).then(|| sum / T::from_count(n))
}

/// Old-class scores multiplied by `mean_new / mean_old`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMean<T> {
    pub factor: T,
    pub old: Vec<bool>,
    pub mean_old: Option<T>,
    pub mean_new: Option<T>,
    /// Set when the means could not be used and the factor fell back to 1.
    pub fallback: bool,
}

impl<T: Real> BatchMean<T> {
    pub fn identity(num_classes: usize) -> Self {
        Self {
            factor: T::one(),
            old: vec![false; num_classes],
            mean_old: None,
            mean_new: None,
            fallback: false,
        }
    }

    /// Fits the ratio on held-out scores. `old[c]` marks classes learned in
    /// earlier states.
    pub fn fit(val_scores: &Matrix<T>, val_labels: &[usize], old: &[bool]) -> Self {
        if !old.iter().any(|&o| o) {
            return Self::identity(old.len());
        }
        let mean_old = mean_true_score(val_scores, val_labels, |l| old[l]);
        let mean_new = mean_true_score(val_scores, val_labels, |l| !old[l]);
        let (factor, fallback) = match (mean_old, mean_new) {
            (Some(mo), Some(mn)) if mo > T::zero() && mn > T::zero() => (mn / mo, false),
            _ => {
                log::warn!("batch-mean calibration fell back to identity (old {mean_old:?}, new {mean_new:?})");
                (T::one(), true)
            }
        };
        Self {
            factor,
            old: old.to_vec(),
            mean_old,
            mean_new,
            fallback,
        }
    }

    pub fn apply(&self, scores: &Matrix<T>) -> Matrix<T> {
        let factors: Vec<T> = self.old.iter().map(|&o| if o { self.factor } else { T::one() }).collect();
        scale_columns(scores, &factors)
    }
}

/// Scores of each count cluster multiplied by `mean(top) / mean(cluster)`,
/// the top cluster being the one with the largest class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountClusters<T> {
    pub clusters: usize,
    pub class_cluster: Vec<usize>,
    pub factors: Vec<T>,
    /// Validation top-1 (percent) of every candidate cluster count tried.
    pub candidates: Vec<(usize, f64)>,
}

impl<T: Real> CountClusters<T> {
    pub fn identity(num_classes: usize) -> Self {
        Self {
            clusters: 1,
            class_cluster: vec![0; num_classes],
            factors: vec![T::one()],
            candidates: Vec::new(),
        }
    }

    /// Partitions the class counts into `clusters` natural-breaks groups and
    /// derives the per-group factors from the validation scores.
    pub fn with_clusters(val_scores: &Matrix<T>, val_labels: &[usize], counts: &[usize], clusters: usize) -> Result<Self> {
        if clusters <= 1 {
            return Ok(Self::identity(counts.len()));
        }
        let values: Vec<T> = counts.iter().map(|&c| T::from_count(c)).collect();
        let breaks = fisher_jenks(&values, clusters)?;
        let class_cluster = breaks.assignments;
        let means: Vec<Option<T>> = (0..clusters)
            .map(|g| mean_true_score(val_scores, val_labels, |l| class_cluster[l] == g))
            .collect();
        let top = means[clusters - 1].filter(|&m| m > T::zero());
        let factors = means
            .iter()
            .map(|m| match (top, m) {
                (Some(t), Some(m)) if *m > T::zero() => t / *m,
                _ => T::one(),
            })
            .collect();
        Ok(Self {
            clusters,
            class_cluster,
            factors,
            candidates: Vec::new(),
        })
    }

    /// Tries each candidate cluster count and keeps the one with the best
    /// validation top-1, smallest count on ties.
    pub fn fit(val_scores: &Matrix<T>, val_labels: &[usize], counts: &[usize], candidates: &[usize]) -> Result<Self> {
        let mut distinct = counts.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let mut best: Option<(f64, Self)> = None;
        let mut tried = Vec::new();
        for &l in candidates {
            if l < 1 || l > distinct.len() {
                continue;
            }
            let cand = Self::with_clusters(val_scores, val_labels, counts, l)?;
            let acc = if val_labels.is_empty() {
                0.0
            } else {
                let cal = cand.apply(val_scores);
                let correct = cal
                    .iter_rows()
                    .zip(val_labels)
                    .filter(|(r, &y)| argmax(r) == Some(y))
                    .count();
                100.0 * correct as f64 / val_labels.len() as f64
            };
            tried.push((l, acc));
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, cand));
            }
        }
        let mut chosen = best.map(|(_, c)| c).unwrap_or_else(|| Self::identity(counts.len()));
        chosen.candidates = tried;
        Ok(chosen)
    }

    pub fn apply(&self, scores: &Matrix<T>) -> Matrix<T> {
        let factors: Vec<T> = self.class_cluster.iter().map(|&g| self.factors[g]).collect();
        scale_columns(scores, &factors)
    }
}

/// `1..=min(FJ_MAX_CLUSTERS, distinct counts)`.
pub fn default_fj_candidates(counts: &[usize]) -> Vec<usize> {
    let mut d = counts.to_vec();
    d.sort_unstable();
    d.dedup();
    (1..=FJ_MAX_CLUSTERS.min(d.len().max(1))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_flips_prediction() {
        let p = Matrix::from_rows(2, [[0.6f64, 0.4]]).unwrap();
        let t = apply_threshold(&p, &[3, 1]).unwrap();
        assert!((t.get(0, 0) - 0.8).abs() < 1e-12);
        assert!((t.get(0, 1) - 1.6).abs() < 1e-12);
        assert_eq!(argmax(p.row(0)), Some(0));
        assert_eq!(argmax(t.row(0)), Some(1));
        assert!(apply_threshold(&p, &[3]).is_err());
        assert!(apply_threshold(&p, &[3, 0]).is_err());
    }

    #[test]
    fn batch_mean_ratio() {
        let val = Matrix::from_rows(2, [[0.4f64, 0.0], [0.0, 0.8]]).unwrap();
        let mb = BatchMean::fit(&val, &[0, 1], &[true, false]);
        assert!((mb.factor - 2.0).abs() < 1e-12);
        let out = mb.apply(&Matrix::from_rows(2, [[0.3, 0.5]]).unwrap());
        assert!((out.get(0, 0) - 0.6).abs() < 1e-12);
        assert_eq!(out.get(0, 1), 0.5);
    }

    #[test]
    fn batch_mean_degenerate_cases() {
        let val = Matrix::from_rows(2, [[0.5, 0.0], [0.0, 0.5]]).unwrap();
        assert_eq!(BatchMean::fit(&val, &[0, 1], &[true, false]).factor, 1.0);
        let first_state = BatchMean::fit(&val, &[0, 1], &[false, false]);
        assert_eq!(first_state.factor, 1.0);
        assert!(!first_state.fallback);
        let negative = Matrix::from_rows(2, [[-0.5, 0.0], [0.0, 0.5]]).unwrap();
        let mb = BatchMean::fit(&negative, &[0, 1], &[true, false]);
        assert!(mb.fallback);
        assert_eq!(mb.factor, 1.0);
    }

    #[test]
    fn count_clusters_scale_minority() {
        // classes 0,1 have few images, 2,3 many
        let counts = [5, 6, 100, 110];
        let val = Matrix::from_rows(4, [
            [0.4f64, 0.0, 0.0, 0.0],
            [0.0, 0.4, 0.0, 0.0],
            [0.0, 0.0, 0.8, 0.0],
            [0.0, 0.0, 0.0, 0.8],
        ])
        .unwrap();
        let fj = CountClusters::with_clusters(&val, &[0, 1, 2, 3], &counts, 2).unwrap();
        assert_eq!(fj.class_cluster, vec![0, 0, 1, 1]);
        assert!((fj.factors[0] - 2.0).abs() < 1e-12);
        assert_eq!(fj.factors[1], 1.0);
        let out = fj.apply(&Matrix::from_rows(4, [[0.3, 0.1, 0.5, 0.2]]).unwrap());
        assert!((out.get(0, 0) - 0.6).abs() < 1e-12);
        let one = CountClusters::with_clusters(&val, &[0, 1, 2, 3], &counts, 1).unwrap();
        assert_eq!(one.apply(&val), val);
    }

    #[test]
    fn identical_counts_give_identity() {
        let val = Matrix::from_rows(2, [[0.4f64, 0.0], [0.0, 0.8]]).unwrap();
        let fj = CountClusters::fit(&val, &[0, 1], &[7, 7], &default_fj_candidates(&[7, 7])).unwrap();
        assert_eq!(fj.clusters, 1);
        assert_eq!(default_fj_candidates(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]), (1..=8).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn threshold_ratio_invariant(p in proptest::collection::vec(0.01f64..1.0, 3), counts in proptest::collection::vec(1usize..50, 3), k in 1usize..20) {
            let s: f64 = p.iter().sum();
            let probs = Matrix::from_rows(3, [p.iter().map(|v| v / s).collect::<Vec<_>>()]).unwrap();
            let a = apply_threshold(&probs, &counts).unwrap();
            let scaled: Vec<usize> = counts.iter().map(|c| c * k).collect();
            let b = apply_threshold(&probs, &scaled).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
            let uniform = apply_threshold(&probs, &[k; 3]).unwrap();
            prop_assert_eq!(argmax(uniform.row(0)), argmax(probs.row(0)));
        }
    }
}
