//! Accuracy, expected calibration error and the old/new mean-score diagnostic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Number of confidence bins used unless configured otherwise.
pub const DEFAULT_ECE_BINS: usize = 20;

/// Percentage of predictions equal to the label.
pub fn top1(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::param(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::param("no samples"));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

/// Mean of the per-state accuracies, skipping the first (non-incremental)
/// state.
pub fn average_incremental_accuracy(per_state: &[f64]) -> Result<f64> {
    if per_state.len() < 2 {
        return Err(Error::param("need at least two states"));
    }
    let rest = &per_state[1..];
    Ok(rest.iter().sum::<f64>() / rest.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean confidence of the bin's samples (0 when empty).
    pub conf: f64,
    /// Fraction of correct predictions in the bin (0 when empty).
    pub acc: f64,
}

/// Confidence histogram with `bins` equal-width bins over [0, 1]. Bins are
/// left-closed and right-open except the last, which includes 1.
pub fn reliability_table<T: Real>(
    probabilities: &Matrix<T>,
    predictions: &[usize],
    labels: &[usize],
    bins: usize,
) -> Result<Vec<ReliabilityBin>> {
    if bins < 1 {
        return Err(Error::param("need at least one bin"));
    }
    let n = probabilities.rows();
    if predictions.len() != n || labels.len() != n {
        return Err(Error::param("probabilities, predictions and labels differ in length"));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0f64; bins];
    let mut correct = vec![0usize; bins];
    for (i, row) in probabilities.iter_rows().enumerate() {
        let sum: f64 = row.iter().map(|v| v.to_f64_lossy()).sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::param(format!("row {i} is not a probability distribution")));
        }
        let conf = row.iter().map(|v| v.to_f64_lossy()).fold(0.0, f64::max).min(1.0);
        let b = bin_of(conf, bins);
        count[b] += 1;
        conf_sum[b] += conf;
        if predictions[i] == labels[i] {
            correct[b] += 1;
        }
    }
    Ok((0..bins)
        .map(|b| {
            let (conf, acc) = if count[b] == 0 {
                (0.0, 0.0)
            } else {
                (conf_sum[b] / count[b] as f64, correct[b] as f64 / count[b] as f64)
            };
            ReliabilityBin {
                lo: b as f64 / bins as f64,
                hi: (b + 1) as f64 / bins as f64,
                count: count[b],
                conf,
                acc,
            }
        })
        .collect())
}

fn bin_of(conf: f64, bins: usize) -> usize {
    let mut b = ((conf * bins as f64).floor() as usize).min(bins - 1);
    // floor(conf * M) can round across an edge
    if (b as f64 / bins as f64) > conf && b > 0 {
        b -= 1;
    } else if b + 1 < bins && conf >= (b + 1) as f64 / bins as f64 {
        b += 1;
    }
    b
}

/// ECE recomposed from a reliability table.
pub fn ece_from_table(table: &[ReliabilityBin]) -> f64 {
    let n: usize = table.iter().map(|b| b.count).sum();
    if n == 0 {
        return 0.0;
    }
    table
        .iter()
        .map(|b| b.count as f64 / n as f64 * (b.conf - b.acc).abs())
        .sum()
}

/// Expected calibration error: bin-weighted mean of |confidence - accuracy|,
/// confidence being the row maximum.
pub fn ece<T: Real>(probabilities: &Matrix<T>, predictions: &[usize], labels: &[usize], bins: usize) -> Result<f64> {
    Ok(ece_from_table(&reliability_table(probabilities, predictions, labels, bins)?))
}

/// Mean ground-truth-class raw score of samples from old and new classes.
/// The old mean is `None` when no sample has an old label.
pub fn group_mean_scores<T: Real>(
    scores: &Matrix<T>,
    labels: &[usize],
    is_old: impl Fn(usize) -> bool,
) -> Result<(Option<f64>, Option<f64>)> {
    if scores.rows() != labels.len() {
        return Err(Error::param("scores and labels differ in length"));
    }
    let (mut old, mut new) = ((0.0, 0usize), (0.0, 0usize));
    for (row, &l) in scores.iter_rows().zip(labels) {
        let v = row[l].to_f64_lossy();
        let acc = if is_old(l) { &mut old } else { &mut new };
        acc.0 += v;
        acc.1 += 1;
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    Ok((mean(old), mean(new)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn top1_cases() {
        assert_eq!(top1(&[0, 1], &[0, 1]).unwrap(), 100.0);
        assert_eq!(top1(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(top1(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(), 75.0);
        assert!(top1(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn incremental_average_skips_first_state() {
        assert_eq!(average_incremental_accuracy(&[70.0, 50.0, 30.0]).unwrap(), 40.0);
        assert_eq!(average_incremental_accuracy(&[5.0, 5.0, 5.0]).unwrap(), 5.0);
        assert!(average_incremental_accuracy(&[1.0]).is_err());
    }

    #[test]
    fn ece_hand_cases() {
        let sharp = Matrix::from_rows(2, [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(ece(&sharp, &[0, 1], &[0, 1], DEFAULT_ECE_BINS).unwrap(), 0.0);

        let p = Matrix::from_rows(2, vec![[0.9, 0.1]; 10]).unwrap();
        let labels = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let e = ece(&p, &[0; 10], &labels, DEFAULT_ECE_BINS).unwrap();
        assert!((e - 0.3).abs() < 1e-12);
    }

    #[test]
    fn bin_placement() {
        let p = Matrix::from_rows(3, [[0.07, 0.03, 0.9]]).unwrap();
        // confidence is the maximum (0.9); check bin arithmetic directly
        assert_eq!(bin_of(0.07, 20), 1);
        assert_eq!(bin_of(1.0, 20), 19);
        assert_eq!(bin_of(0.35, 20), 7);
        let t = reliability_table(&p, &[2], &[2], 20).unwrap();
        assert_eq!(t[18].count, 1);
        assert_eq!(t.iter().map(|b| b.count).sum::<usize>(), 1);
    }

    #[test]
    fn rejects_non_distributions() {
        let p = Matrix::from_rows(2, [[0.7, 0.7]]).unwrap();
        assert!(ece(&p, &[0], &[0], 20).is_err());
    }

    #[test]
    fn group_means() {
        let s = Matrix::from_rows(2, [[0.4, 0.0], [0.0, 0.8]]).unwrap();
        assert_eq!(group_mean_scores(&s, &[0, 1], |c| c == 0).unwrap(), (Some(0.4), Some(0.8)));
        assert_eq!(group_mean_scores(&s, &[1, 1], |c| c == 0).unwrap().0, None);
    }

    proptest! {
        #[test]
        fn table_recomposes_ece(rows in proptest::collection::vec((0.0f64..1.0, 0usize..3, 0usize..3), 1..60)) {
            let probs: Vec<[f64; 3]> = rows.iter().map(|&(a, _, _)| {
                let rest = (1.0 - a) / 2.0;
                [a, rest, rest]
            }).collect();
            let p = Matrix::from_rows(3, probs).unwrap();
            let preds: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let labels: Vec<usize> = rows.iter().map(|r| r.2).collect();
            let table = reliability_table(&p, &preds, &labels, 20).unwrap();
            prop_assert_eq!(table.iter().map(|b| b.count).sum::<usize>(), rows.len());
            for b in table.iter().filter(|b| b.count > 0) {
                prop_assert!(b.conf >= b.lo && (b.conf < b.hi || b.hi == 1.0));
            }
            let e = ece(&p, &preds, &labels, 20).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!((e - ece_from_table(&table)).abs() < 1e-12);
        }

        #[test]
        fn top1_permutation_invariant(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..30), k in 0usize..30) {
            let (p, l): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let mut q = pairs.clone();
            q.rotate_left(k % pairs.len());
            let (p2, l2): (Vec<_>, Vec<_>) = q.into_iter().unzip();
            prop_assert_eq!(top1(&p, &l).unwrap(), top1(&p2, &l2).unwrap());
        }
    }
}
