//! Per-class isotonic step maps fitted with pool-adjacent-violators.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Weighted least-squares non-decreasing fit of `targets` (already ordered
/// by their input). Returns one fitted value per target.
pub fn pava<T: Real>(targets: &[T], weights: &[T]) -> Vec<T> {
    assert_eq!(targets.len(), weights.len());
    // (mean, weight, len) blocks
    let mut blocks: Vec<(T, T, usize)> = Vec::with_capacity(targets.len());
    for (&y, &w) in targets.iter().zip(weights) {
        blocks.push((y, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let w = w1 + w2;
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * w1 + m2 * w2) / w, w, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// Step function: inputs below `boundaries[0]` map to `levels[0]`, inputs in
/// `[boundaries[l-1], boundaries[l])` map to `levels[l]`, inputs at or above
/// the last boundary map to the last level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap<T> {
    pub boundaries: Vec<T>,
    pub levels: Vec<T>,
}

impl<T: Real> IsotonicMap<T> {
    /// Fits the map on `(score, target)` pairs. Equal scores are pooled first
    /// so the result is a function of the score. Boundaries sit halfway
    /// between the neighbouring distinct scores where the level changes.
    pub fn fit(scores: &[T], targets: &[T]) -> Self {
        assert_eq!(scores.len(), targets.len());
        assert!(!scores.is_empty(), "isotonic fit needs at least one pair");
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

        let mut xs: Vec<T> = Vec::new();
        let mut ys: Vec<T> = Vec::new();
        let mut ws: Vec<T> = Vec::new();
        for &i in &idx {
            if xs.last() == Some(&scores[i]) {
                let k = ys.len() - 1;
                let w = ws[k] + T::one();
                ys[k] = (ys[k] * ws[k] + targets[i]) / w;
                ws[k] = w;
            } else {
                xs.push(scores[i]);
                ys.push(targets[i]);
                ws.push(T::one());
            }
        }
        let fitted = pava(&ys, &ws);

        let mut boundaries = Vec::new();
        let mut levels = vec![fitted[0]];
        for k in 1..fitted.len() {
            if fitted[k] != fitted[k - 1] {
                boundaries.push((xs[k - 1] + xs[k]) / T::lit(2.0));
                levels.push(fitted[k]);
            }
        }
        Self { boundaries, levels }
    }

    pub fn apply(&self, score: T) -> T {
        let l = self.boundaries.partition_point(|&b| b <= score);
        self.levels[l]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn separable_pairs_need_no_pooling() {
        let fitted = pava(&[0.0, 0.0, 1.0, 1.0], &[1.0; 4]);
        assert_eq!(fitted, vec![0.0, 0.0, 1.0, 1.0]);
        let m = IsotonicMap::fit(&[0.1f64, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(m.boundaries.len(), 1);
        assert!((m.boundaries[0] - 0.5).abs() < 1e-15);
        assert_eq!(m.levels, vec![0.0, 1.0]);
        assert_eq!(m.apply(0.49), 0.0);
        assert_eq!(m.apply(0.5), 1.0);
        assert_eq!(m.apply(-10.0), 0.0);
        assert_eq!(m.apply(10.0), 1.0);
    }

    #[test]
    fn violating_pair_is_pooled() {
        assert_eq!(pava(&[1.0, 0.0], &[1.0, 1.0]), vec![0.5, 0.5]);
        let m = IsotonicMap::fit(&[0.3, 0.7], &[1.0, 0.0]);
        assert!(m.boundaries.is_empty());
        assert_eq!(m.levels, vec![0.5]);
    }

    #[test]
    fn monotone_targets_are_a_fixed_point() {
        let y = [0.0, 0.2, 0.2, 0.7, 1.0];
        assert_eq!(pava(&y, &[1.0; 5]), y.to_vec());
    }

    #[test]
    fn tied_scores_are_pooled() {
        let m = IsotonicMap::fit(&[0.5, 0.5, 0.1], &[1.0, 0.0, 0.0]);
        assert_eq!(m.levels, vec![0.0, 0.5]);
        assert_eq!(m.apply(0.5), 0.5);
    }

    fn sse(fit: &[f64], y: &[f64]) -> f64 {
        fit.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()
    }

    #[test]
    fn beats_random_monotone_candidates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..=8);
            let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..=1u8))).collect();
            let best = sse(&pava(&y, &vec![1.0; n]), &y);
            for _ in 0..200 {
                let mut c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                c.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert!(best <= sse(&c, &y) + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn fitted_map_is_monotone(pairs in proptest::collection::vec((-3.0f64..3.0, 0u8..2), 1..40), probes in proptest::collection::vec(-4.0f64..4.0, 2..20)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(s, t)| (s, f64::from(t))).unzip();
            let m = IsotonicMap::fit(&x, &y);
            prop_assert_eq!(m.boundaries.len() + 1, m.levels.len());
            prop_assert!(m.levels.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(m.levels.iter().all(|&l| (0.0..=1.0).contains(&l)));
            let mut p = probes.clone();
            p.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in p.windows(2) {
                prop_assert!(m.apply(w[0]) <= m.apply(w[1]));
            }
        }
    }
}
