//! Linear softmax classifier over fixed features, grown by one block of rows
//! per incremental state and retrained with plain cross-entropy SGD.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetTable, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, Stream};
use crate::scalar::Real;

/// Minimum relative loss decrease counted as an improvement by the plateau
/// scheduler.
pub const PLATEAU_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + Copy"))]
pub struct LinearModel<T> {
    pub dim: usize,
    pub num_classes: usize,
    /// One row per class, class ids in increasing order.
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub plateau_patience: usize,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            initial_lr: 0.1,
            plateau_patience: 5,
            lr_decay: 0.1,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::param("epochs must be at least 1"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::param("lr_decay must lie in (0, 1)"));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::param("initial_lr must be positive"));
        }
        if self.batch_size < 1 {
            return Err(Error::param("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Per-epoch mean loss and the learning rate used for that epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    pub epoch_lr: Vec<f64>,
}

impl<T: Real> LinearModel<T> {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            dim,
            num_classes,
            weights: vec![vec![T::zero(); dim]; num_classes],
            biases: vec![T::zero(); num_classes],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().chain(&self.biases).all(|v| v.is_finite())
    }

    fn check_dim(&self, features: &Matrix<T>) -> Result<()> {
        if features.cols() != self.dim {
            return Err(Error::param(format!(
                "features have dimension {}, model expects {}",
                features.cols(),
                self.dim
            )));
        }
        Ok(())
    }

    fn logits_into(&self, x: &[T], out: &mut [T]) {
        for ((o, w), &b) in out.iter_mut().zip(&self.weights).zip(&self.biases) {
            *o = w.iter().zip(x).fold(b, |acc, (&wi, &xi)| acc + wi * xi);
        }
    }

    /// Raw scores `W f + b`, one row per sample.
    pub fn scores(&self, features: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_dim(features)?;
        let mut out = Matrix::filled(features.rows(), self.num_classes, T::zero());
        for i in 0..features.rows() {
            self.logits_into(features.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    /// Mini-batch SGD on softmax cross-entropy. The learning rate is
    /// multiplied by `lr_decay` once the epoch loss has gone
    /// `plateau_patience` epochs without a relative improvement of
    /// [`PLATEAU_THRESHOLD`].
    pub fn fit(&self, features: &Matrix<T>, labels: &[usize], config: &TrainConfig) -> Result<(Self, TrainLog)> {
        config.validate()?;
        self.check_dim(features)?;
        if features.rows() != labels.len() {
            return Err(Error::param("features and labels differ in length"));
        }
        if features.is_empty() {
            return Err(Error::param("no train records"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::param(format!(
                "label {bad} outside the model's {} classes",
                self.num_classes
            )));
        }

        let mut model = self.clone();
        let mut log = TrainLog::default();
        let mut lr = config.initial_lr;
        let mut best = f64::INFINITY;
        let mut bad_epochs = 0;
        let mut order: Vec<usize> = (0..labels.len()).collect();
        let mut probs = vec![T::zero(); self.num_classes];
        let mut grad_w = vec![vec![T::zero(); self.dim]; self.num_classes];
        let mut grad_b = vec![T::zero(); self.num_classes];

        for epoch in 0..config.epochs {
            order.shuffle(&mut stream(config.seed, Stream::TrainShuffle, epoch as u64));
            let mut total_loss = 0.0;
            for batch in order.chunks(config.batch_size) {
                grad_w.iter_mut().flatten().for_each(|g| *g = T::zero());
                grad_b.iter_mut().for_each(|g| *g = T::zero());
                for &i in batch {
                    let x = features.row(i);
                    model.logits_into(x, &mut probs);
                    softmax_in_place(&mut probs);
                    let y = labels[i];
                    total_loss -= probs[y].max(T::min_positive_value()).ln().to_f64_lossy();
                    for (c, &p) in probs.iter().enumerate() {
                        let delta = if c == y { p - T::one() } else { p };
                        grad_b[c] += delta;
                        for (g, &xi) in grad_w[c].iter_mut().zip(x) {
                            *g += delta * xi;
                        }
                    }
                }
                let step = T::lit(lr) / T::from_count(batch.len());
                for c in 0..model.num_classes {
                    model.biases[c] -= step * grad_b[c];
                    for (w, &g) in model.weights[c].iter_mut().zip(&grad_w[c]) {
                        *w -= step * g;
                    }
                }
            }
            let loss = total_loss / labels.len() as f64;
            log.epoch_loss.push(loss);
            log.epoch_lr.push(lr);
            if loss < best * (1.0 - PLATEAU_THRESHOLD) {
                best = loss;
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if bad_epochs >= config.plateau_patience {
                    lr *= config.lr_decay;
                    bad_epochs = 0;
                }
            }
        }
        Ok((model, log))
    }
}

/// Copies `prev`'s rows and appends `new_classes` rows drawn from
/// N(0, 1/dim), biases zero.
pub fn extend_model<T: Real>(
    prev: Option<&LinearModel<T>>,
    new_classes: usize,
    dim: usize,
    seed: u64,
) -> Result<LinearModel<T>> {
    if dim == 0 {
        return Err(Error::param("dimension must be at least 1"));
    }
    let mut model = match prev {
        Some(p) if p.dim != dim => {
            return Err(Error::param(format!(
                "previous model has dimension {}, requested {dim}",
                p.dim
            )))
        }
        Some(p) => p.clone(),
        None => LinearModel::zeros(0, dim),
    };
    let std = 1.0 / (dim as f64).sqrt();
    let mut rng = stream(seed, Stream::ModelInit, model.num_classes as u64);
    for _ in 0..new_classes {
        let row = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(std * z)
            })
            .collect();
        model.weights.push(row);
        model.biases.push(T::zero());
    }
    model.num_classes += new_classes;
    Ok(model)
}

/// Trains on the train-split records of `table`.
pub fn train(model: &LinearModel<f64>, table: &DatasetTable, config: &TrainConfig) -> Result<(LinearModel<f64>, TrainLog)> {
    let (x, y) = table.batch(Split::Train);
    if x.is_empty() {
        return Err(Error::param("table has no train records"));
    }
    model.fit(&x, &y, config)
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Real>(scores: &Matrix<T>) -> Matrix<T> {
    let mut out = scores.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}
