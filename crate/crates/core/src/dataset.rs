//! Feature tables: synthetic generation, CSV ingestion, imbalance recipes,
//! incremental state planning and the train/val split.
//!
//! Feature values are `f64` throughout this module; the generic math modules
//! receive them as [`Matrix`] batches.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub features: Vec<f64>,
    pub label: usize,
    pub split: Split,
}

/// A labelled feature table. `census` counts train-split records per class.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    records: Vec<FeatureRecord>,
    dim: usize,
    num_classes: usize,
    census: BTreeMap<usize, usize>,
}

impl DatasetTable {
    /// Validates dimensions and labels and computes the census.
    pub fn new(records: Vec<FeatureRecord>, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("feature dimension must be at least 1"));
        }
        for (i, r) in records.iter().enumerate() {
            if r.features.len() != dim {
                return Err(Error::param(format!(
                    "record {i} has dimension {}, expected {dim}",
                    r.features.len()
                )));
            }
            if r.label >= num_classes {
                return Err(Error::param(format!(
                    "record {i} has label {} outside [0, {num_classes})",
                    r.label
                )));
            }
        }
        let census = Self::count_train(&records);
        Ok(Self {
            records,
            dim,
            num_classes,
            census,
        })
    }

    fn count_train(records: &[FeatureRecord]) -> BTreeMap<usize, usize> {
        let mut census = BTreeMap::new();
        for r in records.iter().filter(|r| r.split == Split::Train) {
            *census.entry(r.label).or_insert(0) += 1;
        }
        census
    }

    pub fn empty(dim: usize, num_classes: usize) -> Self {
        Self {
            records: Vec::new(),
            dim,
            num_classes,
            census: BTreeMap::new(),
        }
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn census(&self) -> &BTreeMap<usize, usize> {
        &self.census
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Indices of records in `split`, in table order.
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Features and labels of the records in `split`.
    pub fn batch(&self, split: Split) -> (Matrix<f64>, Vec<usize>) {
        self.batch_where(|r| r.split == split)
    }

    pub fn batch_where(&self, keep: impl Fn(&FeatureRecord) -> bool) -> (Matrix<f64>, Vec<usize>) {
        let picked: Vec<&FeatureRecord> = self.records.iter().filter(|r| keep(r)).collect();
        let labels = picked.iter().map(|r| r.label).collect();
        let m = Matrix::from_rows(self.dim, picked.iter().map(|r| r.features.as_slice()))
            .expect("records share the table dimension");
        (m, labels)
    }

    /// Renames every label `l` to `position[l]`'s index in `ordering`, so the
    /// first class of the ordering becomes class 0.
    pub fn relabel(&self, ordering: &[usize]) -> Result<Self> {
        let mut map = vec![usize::MAX; self.num_classes];
        for (pos, &c) in ordering.iter().enumerate() {
            if c >= self.num_classes || map[c] != usize::MAX {
                return Err(Error::param(format!("ordering entry {c} invalid or repeated")));
            }
            map[c] = pos;
        }
        let mut records = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let label = map[r.label];
            if label == usize::MAX {
                return Err(Error::param(format!("class {} missing from ordering", r.label)));
            }
            records.push(FeatureRecord {
                label,
                ..r.clone()
            });
        }
        Self::new(records, self.dim, ordering.len())
    }
}

/// Parameters of the isotropic-blob generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    /// Train records per class.
    pub count_per_class: usize,
    /// Test records per class; the test split is always balanced.
    pub test_per_class: usize,
    /// Typical norm of a class center.
    pub class_separation: f64,
    /// Per-coordinate standard deviation around the center.
    pub noise_scale: f64,
    pub seed: u64,
}

/// Class centers used by [`generate_synthetic`] for the same spec.
pub fn synthetic_centers(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let mut rng = stream(spec.seed, Stream::SyntheticCenters, 0);
    let scale = spec.class_separation / (spec.dim as f64).sqrt();
    (0..spec.num_classes)
        .map(|_| {
            (0..spec.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect()
        })
        .collect()
}

/// Gaussian blobs, one per class, with `count_per_class` train and
/// `test_per_class` test records each.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetTable> {
    if spec.num_classes < 2 {
        return Err(Error::param("need at least 2 classes"));
    }
    if spec.dim < 2 {
        return Err(Error::param("need dimension at least 2"));
    }
    if spec.count_per_class < 2 {
        return Err(Error::param("need at least 2 train records per class"));
    }
    if !(spec.noise_scale >= 0.0 && spec.noise_scale.is_finite())
        || !(spec.class_separation > 0.0 && spec.class_separation.is_finite())
    {
        return Err(Error::param("separation must be positive and noise non-negative"));
    }
    let centers = synthetic_centers(spec);
    let mut records = Vec::with_capacity(spec.num_classes * (spec.count_per_class + spec.test_per_class));
    for split in [Split::Train, Split::Test] {
        let per_class = match split {
            Split::Train => spec.count_per_class,
            _ => spec.test_per_class,
        };
        let mut rng = stream(spec.seed, Stream::SyntheticSamples, split as u64);
        for (label, center) in centers.iter().enumerate() {
            for _ in 0..per_class {
                let features = center
                    .iter()
                    .map(|&c| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        c + spec.noise_scale * z
                    })
                    .collect();
                records.push(FeatureRecord {
                    features,
                    label,
                    split,
                });
            }
        }
    }
    DatasetTable::new(records, spec.dim, spec.num_classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dim: usize,
    pub classes: usize,
    pub name: String,
}

/// Reads a feature CSV (`label,split,f0,...`) with its JSON manifest.
pub fn load_features(features_path: &Path, manifest_path: &Path) -> Result<DatasetTable> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)
        .map_err(|e| Error::format(e.line(), format!("manifest: {e}")))?;
    let text = fs::read_to_string(features_path)?;
    parse_features(&text, &manifest)
}

/// Parses feature CSV text against a manifest.
pub fn parse_features(text: &str, manifest: &Manifest) -> Result<DatasetTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let header = match rows.next() {
        None => return Err(Error::format(1, "empty feature file")),
        Some(h) => h.map_err(|e| Error::format(1, e.to_string()))?,
    };
    let d = manifest.dim;
    let expected: Vec<String> = ["label".to_string(), "split".to_string()]
        .into_iter()
        .chain((0..d).map(|i| format!("f{i}")))
        .collect();
    if header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::format(
            1,
            format!("header must be label,split,f0..f{} for dim {d}", d.saturating_sub(1)),
        ));
    }
    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::format(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() == 1 && row.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        if row.len() != d + 2 {
            return Err(Error::format(
                line,
                format!("row has {} feature values, expected {d}", row.len().saturating_sub(2)),
            ));
        }
        let label: usize = row[0]
            .trim()
            .parse()
            .map_err(|_| Error::format(line, format!("label {:?} is not a class id", &row[0])))?;
        if label >= manifest.classes {
            return Err(Error::format(
                line,
                format!("label {label} outside [0, {})", manifest.classes),
            ));
        }
        let split: Split = row[1].trim().parse().map_err(|e: String| Error::format(line, e))?;
        let features = row
            .iter()
            .skip(2)
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(line, format!("non-numeric feature {cell:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(FeatureRecord {
            features,
            label,
            split,
        });
    }
    if records.is_empty() {
        return Err(Error::format(2, "feature file has no records"));
    }
    DatasetTable::new(records, d, manifest.classes)
}

/// Writes a table as feature CSV plus manifest.
pub fn write_features(table: &DatasetTable, features_path: &Path, manifest_path: &Path, name: &str) -> Result<()> {
    let mut out = fs::File::create(features_path)?;
    write!(out, "label,split")?;
    for i in 0..table.dim() {
        write!(out, ",f{i}")?;
    }
    writeln!(out)?;
    for r in table.records() {
        write!(out, "{},{}", r.label, r.split)?;
        for v in &r.features {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    let manifest = Manifest {
        dim: table.dim(),
        classes: table.num_classes(),
        name: name.to_string(),
    };
    fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ImbalanceKind {
    #[default]
    None,
    Soft,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImbalanceProfile {
    pub kind: ImbalanceKind,
    pub seed: u64,
}

/// Strong-imbalance retention intervals and their share of classes. The upper
/// bound of the last group is the class's own count.
pub const STRONG_GROUPS: [(usize, Option<usize>, f64); 4] = [
    (10, Some(25), 0.3),
    (26, Some(75), 0.3),
    (76, Some(100), 0.2),
    (101, None, 0.2),
];

/// Soft imbalance keeps at least this many records per class.
pub const SOFT_MIN: usize = 50;

/// Splits `n` items into parts proportional to `shares` using largest
/// remainders (earliest part wins ties).
pub fn largest_remainder(n: usize, shares: &[f64]) -> Vec<usize> {
    let total: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| n as f64 * s / total).collect();
    let mut parts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    parts
}

/// Strong-profile group index per class id (classes taken from the census).
pub fn strong_groups(table: &DatasetTable, seed: u64) -> BTreeMap<usize, usize> {
    let mut classes: Vec<usize> = table.census().keys().copied().collect();
    classes.shuffle(&mut stream(seed, Stream::ImbalanceGroups, 0));
    let sizes = largest_remainder(classes.len(), &STRONG_GROUPS.map(|g| g.2));
    let mut groups = BTreeMap::new();
    let mut it = classes.into_iter();
    for (g, &size) in sizes.iter().enumerate() {
        for c in it.by_ref().take(size) {
            groups.insert(c, g);
        }
    }
    groups
}

/// Inclusive retention interval for a class with `n` train records.
pub fn retention_interval(kind: ImbalanceKind, group: usize, n: usize) -> (usize, usize) {
    match kind {
        ImbalanceKind::None => (n, n),
        ImbalanceKind::Soft => (SOFT_MIN.min(n), n),
        ImbalanceKind::Strong => {
            let (lo, hi, _) = STRONG_GROUPS[group];
            let hi = hi.unwrap_or(n).min(n);
            if n < lo {
                (n, n)
            } else {
                (lo, hi.max(lo))
            }
        }
    }
}

/// Subsamples train records per class following the soft or strong recipe.
/// Val and test records are left untouched.
pub fn apply_imbalance(table: &DatasetTable, profile: &ImbalanceProfile) -> Result<DatasetTable> {
    if profile.kind == ImbalanceKind::None {
        return Ok(table.clone());
    }
    let groups = match profile.kind {
        ImbalanceKind::Strong => strong_groups(table, profile.seed),
        _ => BTreeMap::new(),
    };
    let mut keep = vec![true; table.len()];
    let train_idx = table.indices_of(Split::Train);
    for (&class, &n) in table.census() {
        let group = groups.get(&class).copied().unwrap_or(0);
        let (lo, hi) = retention_interval(profile.kind, group, n);
        let mut rng = stream(profile.seed, Stream::ImbalanceDraws, class as u64);
        let target = rng.random_range(lo..=hi);
        let members: Vec<usize> = train_idx
            .iter()
            .copied()
            .filter(|&i| table.records()[i].label == class)
            .collect();
        let mut retained = vec![false; members.len()];
        for j in sample(&mut rng, members.len(), target).into_iter() {
            retained[j] = true;
        }
        for (j, &i) in members.iter().enumerate() {
            keep[i] = retained[j];
        }
    }
    let records = table
        .records()
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect();
    DatasetTable::new(records, table.dim(), table.num_classes())
}

/// Class ordering chunked into incremental states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatePlan {
    pub ordering: Vec<usize>,
    pub classes_per_state: Vec<usize>,
}

impl StatePlan {
    pub fn num_states(&self) -> usize {
        self.classes_per_state.len()
    }

    /// Number of classes seen once state `k` (0-based) is finished.
    pub fn seen_after(&self, k: usize) -> usize {
        self.classes_per_state[..=k].iter().sum()
    }

    /// Positions in `ordering` of the classes added at state `k`.
    pub fn new_range(&self, k: usize) -> std::ops::Range<usize> {
        let start = if k == 0 { 0 } else { self.seen_after(k - 1) };
        start..self.seen_after(k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassOrder {
    Seeded(u64),
    Fixed(Vec<usize>),
}

/// Orders the table's classes and chunks them into `num_states` batches;
/// remainder classes go to the earliest states.
pub fn plan_states(table: &DatasetTable, num_states: usize, order: &ClassOrder) -> Result<StatePlan> {
    let classes: Vec<usize> = table.census().keys().copied().collect();
    let total = classes.len();
    if num_states < 1 || num_states > total {
        return Err(Error::param(format!(
            "num_states {num_states} must lie in [1, {total}]"
        )));
    }
    let ordering = match order {
        ClassOrder::Seeded(seed) => {
            let mut c = classes;
            c.shuffle(&mut stream(*seed, Stream::StatePlan, 0));
            c
        }
        ClassOrder::Fixed(fixed) => {
            let mut sorted = fixed.clone();
            sorted.sort_unstable();
            if sorted != classes {
                return Err(Error::param("fixed class order must be a permutation of the table's classes"));
            }
            fixed.clone()
        }
    };
    let base = total / num_states;
    let extra = total % num_states;
    let classes_per_state = (0..num_states).map(|k| base + usize::from(k < extra)).collect();
    Ok(StatePlan {
        ordering,
        classes_per_state,
    })
}

/// Re-flags `ceil(fraction * n_i)` train records of each class as val,
/// always leaving at least one train record.
pub fn split_train_val(table: &DatasetTable, fraction: f64, seed: u64) -> Result<DatasetTable> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!("val fraction {fraction} must lie in (0, 1)")));
    }
    let mut records = table.records().to_vec();
    let train_idx = table.indices_of(Split::Train);
    for (&class, &n) in table.census() {
        if n < 2 {
            log::warn!("class {class} has a single train record; no val record taken");
            continue;
        }
        let n_val = ((fraction * n as f64).ceil() as usize).clamp(1, n - 1);
        let members: Vec<usize> = train_idx
            .iter()
            .copied()
            .filter(|&i| table.records()[i].label == class)
            .collect();
        let mut rng = stream(seed, Stream::ValSplit, class as u64);
        for j in sample(&mut rng, n, n_val).into_iter() {
            records[members[j]].split = Split::Val;
        }
    }
    DatasetTable::new(records, table.dim(), table.num_classes())
}

/// Population mean and standard deviation of per-class train counts.
pub fn census_stats(table: &DatasetTable) -> Result<(f64, f64)> {
    counts_stats(&table.census().values().copied().collect::<Vec<_>>())
}

pub fn counts_stats(counts: &[usize]) -> Result<(f64, f64)> {
    if counts.is_empty() {
        return Err(Error::param("census is empty"));
    }
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
