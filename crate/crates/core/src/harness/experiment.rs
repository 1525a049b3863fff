//! The incremental protocol: build the data, then for every state extend and
//! retrain the classifier, refresh the memory, fit every calibrator and
//! evaluate on the balanced test split of all classes seen so far.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::backbone::{extend_model, softmax, train, LinearModel, TrainConfig};
use crate::calibration::{CalibContext, CalibInput, Calibrator, FitOptions, Method};
use crate::dataset::{
    apply_imbalance, generate_synthetic, load_features, plan_states, split_train_val, ClassOrder, DatasetTable,
    FeatureRecord, ImbalanceProfile, Split, StatePlan, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::harness::config::{DataSource, ExperimentConfig};
use crate::matrix::Matrix;
use crate::memory::{ClassData, Exemplar, MemoryBuffer};
use crate::metrics::{average_incremental_accuracy, ece, group_mean_scores, top1};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub top1: f64,
    pub ece: f64,
}

/// Results of one incremental state (1-based `state`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateReport {
    pub state: usize,
    pub num_classes: usize,
    /// Mean true-class raw score of the uncalibrated model on test samples
    /// of old and new classes. `None` at the first state.
    pub mean_score_old: Option<f64>,
    pub mean_score_new: Option<f64>,
    pub methods: Vec<MethodReport>,
}

impl StateReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Averages over states 2..k. `None` when the run has a single state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodSummary {
    pub avg_top1: Option<f64>,
    pub avg_ece: Option<f64>,
}

/// Per-state artefacts kept for snapshots and inspection.
#[derive(Debug, Clone)]
pub struct StateArtifacts {
    pub model: LinearModel<f64>,
    pub memory: MemoryBuffer,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub plan: StatePlan,
    pub reports: Vec<StateReport>,
    pub summary: BTreeMap<String, MethodSummary>,
    pub artifacts: Vec<StateArtifacts>,
}

/// Loads or generates the table, then applies imbalance and the val split.
pub fn prepare_data(config: &ExperimentConfig) -> Result<DatasetTable> {
    let raw = match &config.data {
        DataSource::Synthetic(s) => generate_synthetic(&SyntheticSpec {
            num_classes: s.classes,
            dim: s.dim,
            count_per_class: s.per_class,
            test_per_class: s.test_per_class,
            class_separation: s.separation,
            noise_scale: s.noise,
            seed: config.seeds.data,
        })
        .map_err(|e| Error::Config(e.to_string()))?,
        DataSource::Files(f) => load_features(&f.features, &f.manifest)?,
    };
    let imbalanced = apply_imbalance(
        &raw,
        &ImbalanceProfile {
            kind: config.imbalance,
            seed: config.seeds.protocol,
        },
    )?;
    split_train_val(&imbalanced, config.val_fraction, config.seeds.protocol)
}

fn state_train_config(config: &ExperimentConfig, state: usize, salt: u64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(config.seeds.model, salt * 1_000_003 + state as u64),
        ..config.train.clone()
    }
}

/// Per-method averages over states 2..k, keyed by tag.
pub fn summarize(reports: &[StateReport], methods: &[Method]) -> BTreeMap<String, MethodSummary> {
    methods
        .iter()
        .map(|&m| {
            let col = |f: fn(&MethodReport) -> f64| -> Vec<f64> {
                reports.iter().filter_map(|r| r.method(m)).map(f).collect()
            };
            let summary = MethodSummary {
                avg_top1: average_incremental_accuracy(&col(|r| r.top1)).ok(),
                avg_ece: average_incremental_accuracy(&col(|r| r.ece)).ok(),
            };
            (m.tag().to_string(), summary)
        })
        .collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let table = prepare_data(config)?;
    let order = match &config.class_order {
        Some(o) => ClassOrder::Fixed(o.clone()),
        None => ClassOrder::Seeded(config.seeds.protocol),
    };
    let plan = plan_states(&table, config.num_states, &order).map_err(|e| Error::Config(e.to_string()))?;
    // class ids follow the incremental order from here on
    let table = table.relabel(&plan.ordering)?;
    let dim = table.dim();

    let mut methods = config.calibrators.clone();
    methods.dedup();
    let options = FitOptions {
        fj_candidates: config.fj_candidates.clone(),
        balanced_train: TrainConfig {
            epochs: config.balanced_epochs.unwrap_or(config.train.epochs),
            ..config.train.clone()
        },
    };

    let mut model: Option<LinearModel<f64>> = None;
    let mut memory = MemoryBuffer::new(config.memory);
    let mut reports = Vec::with_capacity(plan.num_states());
    let mut artifacts = Vec::with_capacity(plan.num_states());

    for k in 0..plan.num_states() {
        let state = k + 1;
        let new = plan.new_range(k);
        let seen = new.end;
        let wrap = |e: Error| e.in_state(state, "none");

        // D_{N_k}: every train/val record of the new classes plus the memory
        let mut new_classes: Vec<ClassData> = new
            .clone()
            .map(|c| ClassData {
                class: c,
                entries: Vec::new(),
            })
            .collect();
        for (i, r) in table.records().iter().enumerate() {
            if r.split != Split::Test && new.contains(&r.label) {
                new_classes[r.label - new.start].entries.push(Exemplar {
                    index: i,
                    record: r.clone(),
                });
            }
        }
        let mut records: Vec<FeatureRecord> = memory.memory_dataset(dim, seen).map_err(wrap)?.records().to_vec();
        records.extend(new_classes.iter().flat_map(|c| c.entries.iter().map(|e| e.record.clone())));
        let state_table = DatasetTable::new(records, dim, seen).map_err(wrap)?;

        let extended = extend_model(model.as_ref(), new.len(), dim, config.seeds.model).map_err(wrap)?;
        let (trained, _) = train(&extended, &state_table, &state_train_config(config, state, 0)).map_err(wrap)?;

        memory = memory.admit_and_rebalance(new_classes).map_err(wrap)?;

        let (train_x, train_y) = state_table.batch(Split::Train);
        let (val_x, val_y) = state_table.batch(Split::Val);
        let class_counts: Vec<usize> = (0..seen)
            .map(|c| state_table.census().get(&c).copied().unwrap_or(0).max(1))
            .collect();
        let exemplar_features = (0..seen)
            .map(|c| memory.exemplars(c).iter().map(|e| e.record.features.clone()).collect())
            .collect();
        let per_class = (config.memory / seen).max(1);
        let balanced = memory.balanced_dataset(per_class, dim, seen).map_err(wrap)?.batch(Split::Train);
        let ctx = CalibContext {
            train_scores: trained.scores(&train_x).map_err(wrap)?,
            train_labels: train_y,
            val_scores: trained.scores(&val_x).map_err(wrap)?,
            val_labels: val_y,
            class_counts,
            old: (0..seen).map(|c| c < new.start).collect(),
            exemplar_features,
            model: Some(trained.clone()),
            balanced: Some(balanced),
        };

        let (test_x, test_y) = table.batch_where(|r| r.split == Split::Test && r.label < seen);
        if test_y.is_empty() {
            return Err(Error::format(0, "no test records for the classes seen so far").in_state(state, "none"));
        }
        let test_scores = trained.scores(&test_x).map_err(wrap)?;
        let (mean_old, mean_new) = group_mean_scores(&test_scores, &test_y, |c| c < new.start).map_err(wrap)?;

        let mut method_reports = Vec::with_capacity(methods.len());
        for &m in &methods {
            let wrap_m = |e: Error| e.in_state(state, m.tag());
            let mut opts = options.clone();
            opts.balanced_train.seed = state_train_config(config, state, 1).seed;
            let cal = Calibrator::fit(m, &ctx, &opts).map_err(wrap_m)?;
            let out = cal
                .apply(CalibInput {
                    scores: &test_scores,
                    features: &test_x,
                })
                .map_err(wrap_m)?;
            let probs: Matrix<f64> = softmax(&out.scores);
            method_reports.push(MethodReport {
                method: m,
                top1: top1(&out.predictions, &test_y).map_err(wrap_m)?,
                ece: ece(&probs, &out.predictions, &test_y, config.ece_bins).map_err(wrap_m)?,
            });
        }

        log::info!("state {state}/{}: {seen} classes, memory holds {}", plan.num_states(), memory.total());
        reports.push(StateReport {
            state,
            num_classes: seen,
            mean_score_old: mean_old,
            mean_score_new: mean_new,
            methods: method_reports,
        });
        artifacts.push(StateArtifacts {
            model: trained.clone(),
            memory: memory.clone(),
        });
        model = Some(trained);
    }

    let summary = summarize(&reports, &methods);
    Ok(ExperimentResult {
        plan,
        reports,
        summary,
        artifacts,
    })
}
