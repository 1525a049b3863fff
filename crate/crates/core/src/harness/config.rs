//! Experiment configuration (JSON).
//!
//! ```json
//! {
//!   "data": { "synthetic": { "classes": 20, "dim": 16, "per_class": 150,
//!                            "test_per_class": 30, "separation": 3.0, "noise": 1.0 } },
//!   "imbalance": "strong",
//!   "num_states": 5,
//!   "memory": 40,
//!   "train": { "epochs": 25, "initial_lr": 0.1, "plateau_patience": 5,
//!              "lr_decay": 0.1, "batch_size": 32 },
//!   "calibrators": ["none", "iso", "pl", "th", "nem", "bal", "mb", "fj"],
//!   "val_fraction": 0.1,
//!   "ece_bins": 20,
//!   "seeds": { "data": 1, "model": 2, "protocol": 3 }
//! }
//! ```
//!
//! `data` may instead be `{ "files": { "features": "f.csv", "manifest": "f.json" } }`.
//! Every field except `data` and `memory` has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::TrainConfig;
use crate::calibration::Method;
use crate::dataset::ImbalanceKind;
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_ECE_BINS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureFiles {
    pub features: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticData),
    Files(FeatureFiles),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub data: u64,
    #[serde(default)]
    pub model: u64,
    #[serde(default)]
    pub protocol: u64,
}

fn default_states() -> usize {
    10
}
fn default_val_fraction() -> f64 {
    0.1
}
fn default_bins() -> usize {
    DEFAULT_ECE_BINS
}
fn default_calibrators() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub imbalance: ImbalanceKind,
    #[serde(default = "default_states")]
    pub num_states: usize,
    /// Exemplar budget B.
    pub memory: usize,
    /// Training schedule; its seed is replaced per state from `seeds.model`.
    #[serde(default)]
    pub train: TrainConfig,
    /// Epochs of the balanced fine-tuning step; defaults to `train.epochs`.
    #[serde(default)]
    pub balanced_epochs: Option<usize>,
    #[serde(default = "default_calibrators")]
    pub calibrators: Vec<Method>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_bins")]
    pub ece_bins: usize,
    #[serde(default)]
    pub fj_candidates: Option<Vec<usize>>,
    #[serde(default)]
    pub seeds: Seeds,
    /// Fixed class order; a seeded random order is used otherwise.
    #[serde(default)]
    pub class_order: Option<Vec<usize>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Also write per-state model and memory snapshots.
    #[serde(default)]
    pub snapshots: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative feature paths are resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (DataSource::Files(f), Some(dir)) = (&mut cfg.data, path.parent()) {
            for p in [&mut f.features, &mut f.manifest] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_states < 1 {
            return bad("num_states must be at least 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction {} must lie in (0, 1)", self.val_fraction));
        }
        if self.ece_bins < 1 {
            return bad("ece_bins must be at least 1".into());
        }
        if self.calibrators.is_empty() {
            return bad("at least one calibrator is required".into());
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.balanced_epochs == Some(0) {
            return bad("balanced_epochs must be at least 1".into());
        }
        Ok(())
    }
}
