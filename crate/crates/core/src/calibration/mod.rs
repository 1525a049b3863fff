//! Post-hoc calibration of the incremental classifier.
//!
//! Seven methods share one fit/apply contract:
//!
//! | tag   | fitted on                     | applied to        |
//! |-------|------------------------------|-------------------|
//! | `iso` | train scores, one-vs-all      | raw scores        |
//! | `pl`  | train scores, one-vs-all      | raw scores        |
//! | `th`  | class counts (no fitting)     | softmax of scores |
//! | `nem` | exemplar memory               | features          |
//! | `bal` | balanced exemplar subset      | features          |
//! | `mb`  | validation scores             | raw scores        |
//! | `fj`  | validation scores and counts  | raw scores        |
//!
//! `none` is the uncalibrated fine-tuning baseline.

pub mod isotonic;
pub mod nem;
pub mod platt;
pub mod scaling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::{softmax, LinearModel, TrainConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{argmax, Real};

pub use isotonic::{pava, IsotonicMap};
pub use nem::{ExemplarMeans, NEM_EPSILON};
pub use platt::PlattParams;
pub use scaling::{apply_threshold, default_fj_candidates, BatchMean, CountClusters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    None,
    Iso,
    Pl,
    Th,
    Nem,
    Bal,
    Mb,
    Fj,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::None,
        Method::Iso,
        Method::Pl,
        Method::Th,
        Method::Nem,
        Method::Bal,
        Method::Mb,
        Method::Fj,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Iso => "iso",
            Method::Pl => "pl",
            Method::Th => "th",
            Method::Nem => "nem",
            Method::Bal => "bal",
            Method::Mb => "mb",
            Method::Fj => "fj",
        }
    }

    pub fn input_mode(self) -> InputMode {
        match self {
            Method::Th => InputMode::SoftmaxProbs,
            Method::Nem | Method::Bal => InputMode::Features,
            _ => InputMode::RawScores,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown calibration method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    RawScores,
    SoftmaxProbs,
    Features,
}

/// Everything a calibrator may be fitted on at one incremental state.
/// Classes are numbered `0..num_classes()`.
#[derive(Debug, Clone)]
pub struct CalibContext<T> {
    /// Scores of the current model on its own training data, with labels.
    pub train_scores: Matrix<T>,
    pub train_labels: Vec<usize>,
    /// Scores on the held-out validation records, with labels.
    pub val_scores: Matrix<T>,
    pub val_labels: Vec<usize>,
    /// Training image count per class.
    pub class_counts: Vec<usize>,
    /// `true` for classes learned before the current state.
    pub old: Vec<bool>,
    /// Stored exemplar features per class.
    pub exemplar_features: Vec<Vec<Vec<T>>>,
    /// Current classifier and the balanced exemplar subset it is
    /// fine-tuned on by `bal`.
    pub model: Option<LinearModel<T>>,
    pub balanced: Option<(Matrix<T>, Vec<usize>)>,
}

impl<T: Real> CalibContext<T> {
    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn total_count(&self) -> usize {
        self.class_counts.iter().sum()
    }

    pub fn old_classes(&self) -> Vec<usize> {
        (0..self.old.len()).filter(|&c| self.old[c]).collect()
    }

    pub fn new_classes(&self) -> Vec<usize> {
        (0..self.old.len()).filter(|&c| !self.old[c]).collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_classes();
        if n == 0 {
            return Err(Error::param("calibration context has no classes"));
        }
        if self.old.len() != n {
            return Err(Error::param("old/new partition does not cover every class"));
        }
        for (m, labels, name) in [
            (&self.train_scores, &self.train_labels, "train"),
            (&self.val_scores, &self.val_labels, "val"),
        ] {
            if m.rows() != labels.len() || (m.rows() > 0 && m.cols() != n) {
                return Err(Error::param(format!("{name} scores do not match labels/classes")));
            }
            if labels.iter().any(|&l| l >= n) {
                return Err(Error::param(format!("{name} label outside the class range")));
            }
        }
        Ok(())
    }
}

/// Options that are not part of the per-state data.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Cluster counts tried by `fj`; `None` uses [`default_fj_candidates`].
    pub fj_candidates: Option<Vec<usize>>,
    /// Schedule used by `bal` to fine-tune the classification layer.
    pub balanced_train: TrainConfig,
}

/// A fitted calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de> + Copy"))]
pub enum Calibrator<T> {
    None,
    /// One step map per class; `None` keeps the raw score.
    Iso { maps: Vec<Option<IsotonicMap<T>>> },
    Pl { params: Vec<PlattParams<T>> },
    Th { counts: Vec<usize> },
    Nem(ExemplarMeans<T>),
    Bal { model: LinearModel<T> },
    Mb(BatchMean<T>),
    Fj(CountClusters<T>),
}

/// Inputs to [`Calibrator::apply`]: the raw scores of the trained model and
/// the features they were computed from.
#[derive(Debug, Clone, Copy)]
pub struct CalibInput<'a, T> {
    pub scores: &'a Matrix<T>,
    pub features: &'a Matrix<T>,
}

/// Calibrated scores and the class predicted from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated<T> {
    pub scores: Matrix<T>,
    pub predictions: Vec<usize>,
}

fn one_vs_all<T: Real>(ctx: &CalibContext<T>, class: usize) -> (Vec<T>, Vec<bool>) {
    let scores = (0..ctx.train_scores.rows()).map(|i| ctx.train_scores.get(i, class)).collect();
    let pos = ctx.train_labels.iter().map(|&l| l == class).collect();
    (scores, pos)
}

pub fn fit_isotonic<T: Real>(ctx: &CalibContext<T>) -> Result<Calibrator<T>> {
    ctx.validate()?;
    let maps = (0..ctx.num_classes())
        .map(|c| {
            let (s, pos) = one_vs_all(ctx, c);
            if !pos.iter().any(|&p| p) {
                log::warn!("iso: class {c} has no positive samples, keeping raw scores");
                return None;
            }
            let targets: Vec<T> = pos.iter().map(|&p| if p { T::one() } else { T::zero() }).collect();
            Some(IsotonicMap::fit(&s, &targets))
        })
        .collect();
    Ok(Calibrator::Iso { maps })
}

pub fn fit_platt<T: Real>(ctx: &CalibContext<T>) -> Result<Calibrator<T>> {
    ctx.validate()?;
    let params = (0..ctx.num_classes())
        .map(|c| {
            let (s, pos) = one_vs_all(ctx, c);
            let p = PlattParams::fit(&s, &pos);
            if !p.converged {
                log::debug!("pl: class {c} stopped after {} iterations short of the gradient tolerance", p.iterations);
            }
            p
        })
        .collect();
    Ok(Calibrator::Pl { params })
}

pub fn fit_threshold<T: Real>(ctx: &CalibContext<T>) -> Result<Calibrator<T>> {
    ctx.validate()?;
    if ctx.class_counts.contains(&0) {
        return Err(Error::param("class counts must be positive"));
    }
    Ok(Calibrator::Th {
        counts: ctx.class_counts.clone(),
    })
}

pub fn fit_nem<T: Real>(ctx: &CalibContext<T>) -> Result<Calibrator<T>> {
    if ctx.exemplar_features.len() != ctx.num_classes() {
        return Err(Error::Config("memory does not cover every class".into()));
    }
    Ok(Calibrator::Nem(ExemplarMeans::fit(&ctx.exemplar_features)?))
}

/// Fine-tunes a copy of the classification layer on the balanced subset.
pub fn fit_balanced<T: Real>(ctx: &CalibContext<T>, config: &TrainConfig) -> Result<Calibrator<T>> {
    let model = ctx
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("bal needs the current model".into()))?;
    let (x, y) = ctx
        .balanced
        .as_ref()
        .ok_or_else(|| Error::Config("bal needs a balanced exemplar table".into()))?;
    if x.is_empty() {
        return Err(Error::param("balanced table is empty"));
    }
    let (tuned, _) = model.fit(x, y, config)?;
    Ok(Calibrator::Bal { model: tuned })
}

pub fn fit_mb<T: Real>(ctx: &CalibContext<T>) -> Result<Calibrator<T>> {
    ctx.validate()?;
    Ok(Calibrator::Mb(BatchMean::fit(&ctx.val_scores, &ctx.val_labels, &ctx.old)))
}

pub fn fit_fj<T: Real>(ctx: &CalibContext<T>, candidates: &[usize]) -> Result<Calibrator<T>> {
    ctx.validate()?;
    Ok(Calibrator::Fj(CountClusters::fit(
        &ctx.val_scores,
        &ctx.val_labels,
        &ctx.class_counts,
        candidates,
    )?))
}

impl<T: Real> Calibrator<T> {
    pub fn fit(method: Method, ctx: &CalibContext<T>, options: &FitOptions) -> Result<Self> {
        match method {
            Method::None => Ok(Calibrator::None),
            Method::Iso => fit_isotonic(ctx),
            Method::Pl => fit_platt(ctx),
            Method::Th => fit_threshold(ctx),
            Method::Nem => fit_nem(ctx),
            Method::Bal => fit_balanced(ctx, &options.balanced_train),
            Method::Mb => fit_mb(ctx),
            Method::Fj => {
                let cands = options
                    .fj_candidates
                    .clone()
                    .unwrap_or_else(|| default_fj_candidates(&ctx.class_counts));
                fit_fj(ctx, &cands)
            }
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Calibrator::None => Method::None,
            Calibrator::Iso { .. } => Method::Iso,
            Calibrator::Pl { .. } => Method::Pl,
            Calibrator::Th { .. } => Method::Th,
            Calibrator::Nem(_) => Method::Nem,
            Calibrator::Bal { .. } => Method::Bal,
            Calibrator::Mb(_) => Method::Mb,
            Calibrator::Fj(_) => Method::Fj,
        }
    }

    /// Calibrated scores for a batch. Predictions are the arg-max of the
    /// calibrated scores (lowest index on ties), except for `nem` which uses
    /// the arg-min of the exemplar-mean distances.
    pub fn apply(&self, input: CalibInput<'_, T>) -> Result<Calibrated<T>> {
        let scores = input.scores;
        let out = match self {
            Calibrator::None => scores.clone(),
            Calibrator::Iso { maps } => {
                check_cols(scores, maps.len())?;
                let mut out = scores.clone();
                for i in 0..out.rows() {
                    for (v, m) in out.row_mut(i).iter_mut().zip(maps) {
                        if let Some(m) = m {
                            *v = m.apply(*v);
                        }
                    }
                }
                out
            }
            Calibrator::Pl { params } => {
                check_cols(scores, params.len())?;
                let mut out = scores.clone();
                for i in 0..out.rows() {
                    for (v, p) in out.row_mut(i).iter_mut().zip(params) {
                        *v = p.apply(*v);
                    }
                }
                out
            }
            Calibrator::Th { counts } => apply_threshold(&softmax(scores), counts)?,
            Calibrator::Nem(means) => {
                let (s, predictions) = means.apply(input.features)?;
                return Ok(Calibrated { scores: s, predictions });
            }
            Calibrator::Bal { model } => model.scores(input.features)?,
            Calibrator::Mb(mb) => {
                check_cols(scores, mb.old.len())?;
                mb.apply(scores)
            }
            Calibrator::Fj(fj) => {
                check_cols(scores, fj.class_cluster.len())?;
                fj.apply(scores)
            }
        };
        let predictions = predict_all(&out);
        Ok(Calibrated {
            scores: out,
            predictions,
        })
    }
}

fn check_cols<T: Copy>(scores: &Matrix<T>, classes: usize) -> Result<()> {
    if scores.cols() != classes {
        return Err(Error::param(format!(
            "{} score columns, calibrator fitted for {classes} classes",
            scores.cols()
        )));
    }
    Ok(())
}

/// Arg-max of a calibrated row, lowest index on ties.
pub fn predict<T: PartialOrd + Copy>(row: &[T]) -> usize {
    argmax(row).unwrap_or(0)
}

pub fn predict_all<T: PartialOrd + Copy>(scores: &Matrix<T>) -> Vec<usize> {
    scores.iter_rows().map(predict).collect()
}
