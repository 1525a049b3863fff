//! Nearest-mean-of-exemplars classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{argmin, sq_dist, Real};

/// Added to distances before inversion to keep scores finite.
pub const NEM_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarMeans<T> {
    pub means: Vec<Vec<T>>,
}

impl<T: Real> ExemplarMeans<T> {
    /// Per-class mean of the stored exemplars. Every class needs one.
    pub fn fit(exemplars: &[Vec<Vec<T>>]) -> Result<Self> {
        let mut means = Vec::with_capacity(exemplars.len());
        for (class, list) in exemplars.iter().enumerate() {
            let Some(first) = list.first() else {
                return Err(Error::Config(format!("class {class} has no exemplars in memory")));
            };
            let inv = T::one() / T::from_count(list.len());
            let mut m = vec![T::zero(); first.len()];
            for f in list {
                for (a, &v) in m.iter_mut().zip(f) {
                    *a += v * inv;
                }
            }
            means.push(m);
        }
        Ok(Self { means })
    }

    /// Euclidean distance from every sample to every class mean.
    pub fn distances(&self, features: &Matrix<T>) -> Result<Matrix<T>> {
        if let Some(m) = self.means.first() {
            if m.len() != features.cols() {
                return Err(Error::param("feature dimension differs from exemplar means"));
            }
        }
        let mut out = Matrix::filled(features.rows(), self.means.len(), T::zero());
        for i in 0..features.rows() {
            let f = features.row(i);
            for (o, m) in out.row_mut(i).iter_mut().zip(&self.means) {
                *o = sq_dist(f, m).sqrt();
            }
        }
        Ok(out)
    }

    /// Inverse-distance scores and the nearest-mean predictions.
    pub fn apply(&self, features: &Matrix<T>) -> Result<(Matrix<T>, Vec<usize>)> {
        let d = self.distances(features)?;
        let preds = d.iter_rows().map(|r| argmin(r).unwrap_or(0)).collect();
        let eps = T::lit(NEM_EPSILON);
        Ok((d.map(|v| T::one() / (v + eps)), preds))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_mean_wins() {
        let m = ExemplarMeans::fit(&[vec![vec![0.0, 0.0]], vec![vec![5.0, 0.0]], vec![vec![1.0, 1.0], vec![3.0, 1.0]]]).unwrap();
        let (_, p) = m.apply(&Matrix::from_rows(2, [[2.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(p, vec![2]);
    }

    #[test]
    fn closer_mean_and_inverse_score() {
        let m = ExemplarMeans { means: vec![vec![0.0f64, 0.0], vec![2.0, 0.0]] };
        let (s, p) = m.apply(&Matrix::from_rows(2, [[0.5, 0.0]]).unwrap()).unwrap();
        assert_eq!(p, vec![0]);
        assert!((s.get(0, 0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn missing_exemplars_are_a_config_error() {
        assert!(matches!(
            ExemplarMeans::<f64>::fit(&[vec![vec![1.0]], vec![]]),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn translation_equivariant(shift in proptest::collection::vec(-10.0f64..10.0, 2), pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..10)) {
            let ex: Vec<Vec<Vec<f64>>> = pts.chunks(2).map(|c| c.iter().map(|&(x, y)| vec![x, y]).collect()).collect();
            let test = Matrix::from_rows(2, pts.iter().map(|&(x, y)| [y, x])).unwrap();
            let moved_ex: Vec<Vec<Vec<f64>>> = ex.iter().map(|l| l.iter().map(|f| vec![f[0] + shift[0], f[1] + shift[1]]).collect()).collect();
            let moved_test = Matrix::from_rows(2, test.iter_rows().map(|r| [r[0] + shift[0], r[1] + shift[1]])).unwrap();
            let (_, a) = ExemplarMeans::fit(&ex).unwrap().apply(&test).unwrap();
            let (_, b) = ExemplarMeans::fit(&moved_ex).unwrap().apply(&moved_test).unwrap();
            let da = ExemplarMeans::fit(&ex).unwrap().distances(&test).unwrap();
            // only compare rows without near ties
            for i in 0..a.len() {
                let mut r: Vec<f64> = da.row(i).to_vec();
                r.sort_by(|x, y| x.partial_cmp(y).unwrap());
                if r.len() < 2 || r[1] - r[0] > 1e-6 {
                    prop_assert_eq!(a[i], b[i]);
                }
            }
        }
    }
}
