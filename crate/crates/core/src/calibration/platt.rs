//! One-vs-all logistic (Platt) calibration fitted by Newton's method.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-9;
const MIN_STEP: f64 = 1e-10;
const HESSIAN_RIDGE: f64 = 1e-12;

/// Calibrated score `1 / (1 + exp(a * s + c))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams<T> {
    pub a: T,
    pub c: T,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> PlattParams<T> {
    pub fn apply(&self, score: T) -> T {
        let z = self.a * score + self.c;
        // same value, written to avoid overflow on either side
        if z >= T::zero() {
            let e = (-z).exp();
            e / (T::one() + e)
        } else {
            T::one() / (T::one() + z.exp())
        }
    }

    /// Maximum-likelihood fit on smoothed targets `(N+ + 1)/(N+ + 2)` for
    /// positives and `1/(N- + 2)` for negatives.
    pub fn fit(scores: &[T], positive: &[bool]) -> Self {
        assert_eq!(scores.len(), positive.len());
        let n_pos = positive.iter().filter(|&&p| p).count();
        let n_neg = positive.len() - n_pos;
        let one = T::one();
        let two = T::lit(2.0);
        let hi = (T::from_count(n_pos) + one) / (T::from_count(n_pos) + two);
        let lo = one / (T::from_count(n_neg) + two);
        let targets: Vec<T> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

        let objective = |a: T, c: T| -> T {
            scores
                .iter()
                .zip(&targets)
                .map(|(&s, &t)| {
                    let z = a * s + c;
                    if z >= T::zero() {
                        t * z + (one + (-z).exp()).ln()
                    } else {
                        (t - one) * z + (one + z.exp()).ln()
                    }
                })
                .fold(T::zero(), |acc, v| acc + v)
        };

        let mut a = T::zero();
        let mut c = ((T::from_count(n_neg) + one) / (T::from_count(n_pos) + one)).ln();
        let mut value = objective(a, c);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < MAX_ITERATIONS {
            let (mut h11, mut h22, mut h21) = (T::lit(HESSIAN_RIDGE), T::lit(HESSIAN_RIDGE), T::zero());
            let (mut g1, mut g2) = (T::zero(), T::zero());
            for (&s, &t) in scores.iter().zip(&targets) {
                let z = a * s + c;
                let (p, q) = if z >= T::zero() {
                    let e = (-z).exp();
                    (e / (one + e), one / (one + e))
                } else {
                    let e = z.exp();
                    (one / (one + e), e / (one + e))
                };
                let d2 = p * q;
                h11 += s * s * d2;
                h22 += d2;
                h21 += s * d2;
                let d1 = t - p;
                g1 += s * d1;
                g2 += d1;
            }
            if (g1 * g1 + g2 * g2).sqrt() < T::lit(GRADIENT_TOLERANCE) {
                converged = true;
                break;
            }
            iterations += 1;
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let dc = -(-h21 * g1 + h11 * g2) / det;
            let slope = g1 * da + g2 * dc;
            let mut step = one;
            let mut accepted = false;
            while step >= T::lit(MIN_STEP) {
                let (na, nc) = (a + step * da, c + step * dc);
                let nv = objective(na, nc);
                if nv < value + T::lit(1e-4) * step * slope {
                    a = na;
                    c = nc;
                    value = nv;
                    accepted = true;
                    break;
                }
                step /= two;
            }
            if !accepted {
                break;
            }
        }
        Self {
            a,
            c,
            converged,
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn symmetric_data_centres_the_sigmoid() {
        let scores = [-1.0f64, -1.0, -1.0, 1.0, 1.0, 1.0];
        let pos = [false, false, false, true, true, true];
        let p = PlattParams::fit(&scores, &pos);
        assert!(p.converged);
        assert!((p.apply(0.0) - 0.5).abs() < 1e-6);
        assert!(p.a < 0.0);
        assert!(p.apply(1.0) > p.apply(-1.0));
    }

    #[test]
    fn uninformative_scores_give_flat_map() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let scores: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pos: Vec<bool> = (0..2000).map(|_| rng.random_bool(0.3)).collect();
        let p = PlattParams::fit(&scores, &pos);
        assert!(p.converged);
        assert!(p.a.abs() < 0.3, "slope {}", p.a);
        let n_pos = pos.iter().filter(|&&b| b).count() as f64;
        let n_neg = 2000.0 - n_pos;
        let base = (n_pos * (n_pos + 1.0) / (n_pos + 2.0) + n_neg / (n_neg + 2.0)) / 2000.0;
        assert!((p.apply(0.0) - base).abs() < 0.03);
    }

    #[test]
    fn separable_data_stays_finite() {
        let scores = [-3.0f64, -2.0, 2.0, 3.0];
        let pos = [false, false, true, true];
        let p = PlattParams::fit(&scores, &pos);
        assert!(p.a.is_finite() && p.c.is_finite());
        assert!(p.apply(3.0) < 1.0 && p.apply(3.0) > 0.6);
    }

    #[test]
    fn strictly_monotone_when_slope_nonzero() {
        let p = PlattParams { a: -2.0f64, c: 0.3, converged: true, iterations: 0 };
        let xs = [-2.0, -0.5, 0.0, 0.1, 4.0];
        for w in xs.windows(2) {
            assert!(p.apply(w[0]) < p.apply(w[1]));
        }
        let q = PlattParams { a: 0.5f32, c: 0.0, converged: true, iterations: 0 };
        assert!(q.apply(1.0) < q.apply(0.0));
    }
}
