//! Bounded exemplar memory with herding selection.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset::{DatasetTable, FeatureRecord};
use crate::error::{Error, Result};
use crate::scalar::{sq_dist, Real};

/// Greedy running-mean herding.
///
/// At step `t` the unchosen sample whose addition brings the mean of the
/// chosen set closest to the class mean is picked; ties go to the lowest
/// index. Returns a full permutation of `0..features.len()`.
pub fn herd_order<T: Real>(features: &[Vec<T>]) -> Vec<usize> {
    let n = features.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = features[0].len();
    let inv_n = T::one() / T::from_count(n);
    let mut mean = vec![T::zero(); dim];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(f) {
            *m += v * inv_n;
        }
    }

    let mut chosen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut running = vec![T::zero(); dim];
    let mut candidate = vec![T::zero(); dim];
    for t in 1..=n {
        let inv_t = T::one() / T::from_count(t);
        let mut best: Option<(usize, T)> = None;
        for (i, f) in features.iter().enumerate() {
            if chosen[i] {
                continue;
            }
            for ((c, &r), &v) in candidate.iter_mut().zip(&running).zip(f) {
                *c = (r + v) * inv_t;
            }
            let d = sq_dist(&mean, &candidate);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        let (pick, _) = best.expect("an unchosen sample remains");
        chosen[pick] = true;
        order.push(pick);
        for (r, &v) in running.iter_mut().zip(&features[pick]) {
            *r += v;
        }
    }
    order
}

/// A stored sample: its row in the source table and the record itself
/// (features, label and the split flag assigned when the dataset was built).
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub index: usize,
    pub record: FeatureRecord,
}

/// All train/val records of one class entering the memory.
#[derive(Debug, Clone)]
pub struct ClassData {
    pub class: usize,
    pub entries: Vec<Exemplar>,
}

/// Per-class slot allocation: `floor(B / N)` for everyone, one extra for the
/// first `B mod N` classes in id order.
pub fn quotas(capacity: usize, classes: &[usize]) -> BTreeMap<usize, usize> {
    let mut sorted = classes.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n == 0 {
        return BTreeMap::new();
    }
    let base = capacity / n;
    let extra = capacity % n;
    sorted
        .into_iter()
        .enumerate()
        .map(|(rank, c)| (c, base + usize::from(rank < extra)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBuffer {
    capacity: usize,
    state_index: usize,
    per_class: BTreeMap<usize, Vec<Exemplar>>,
}

#[derive(Debug, Serialize)]
struct Snapshot {
    capacity: usize,
    state_index: usize,
    classes: BTreeMap<String, Vec<usize>>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            state_index: 0,
            per_class: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn state_index(&self) -> usize {
        self.state_index
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_class.keys().copied()
    }

    pub fn exemplars(&self, class: usize) -> &[Exemplar] {
        self.per_class.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    /// Adds new classes (herded from scratch) and shrinks every class to its
    /// quota over the enlarged class set. Old classes keep a prefix of their
    /// stored order.
    pub fn admit_and_rebalance(&self, new_classes: Vec<ClassData>) -> Result<MemoryBuffer> {
        let mut per_class = self.per_class.clone();
        for data in new_classes {
            if per_class.contains_key(&data.class) {
                return Err(Error::param(format!("class {} is already stored", data.class)));
            }
            let feats: Vec<Vec<f64>> = data.entries.iter().map(|e| e.record.features.clone()).collect();
            let order = herd_order(&feats);
            let mut entries: Vec<Option<Exemplar>> = data.entries.into_iter().map(Some).collect();
            let herded = order
                .into_iter()
                .map(|i| entries[i].take().expect("permutation"))
                .collect();
            per_class.insert(data.class, herded);
        }
        let ids: Vec<usize> = per_class.keys().copied().collect();
        let q = quotas(self.capacity, &ids);
        for (c, list) in per_class.iter_mut() {
            list.truncate(q[c]);
        }
        Ok(MemoryBuffer {
            capacity: self.capacity,
            state_index: self.state_index + 1,
            per_class,
        })
    }

    /// Stored exemplars as a table, with their original split flags.
    pub fn memory_dataset(&self, dim: usize, num_classes: usize) -> Result<DatasetTable> {
        let records = self
            .per_class
            .values()
            .flatten()
            .map(|e| e.record.clone())
            .collect();
        DatasetTable::new(records, dim, num_classes)
    }

    /// The first `min(per_class, stored)` exemplars of every class.
    pub fn balanced_dataset(&self, per_class: usize, dim: usize, num_classes: usize) -> Result<DatasetTable> {
        let records = self
            .per_class
            .values()
            .flat_map(|list| list.iter().take(per_class))
            .map(|e| e.record.clone())
            .collect();
        DatasetTable::new(records, dim, num_classes)
    }

    /// JSON snapshot `{capacity, state_index, classes: {id: [record indices]}}`.
    pub fn snapshot_json(&self) -> Result<String> {
        let snap = Snapshot {
            capacity: self.capacity,
            state_index: self.state_index,
            classes: self
                .per_class
                .iter()
                .map(|(c, l)| (c.to_string(), l.iter().map(|e| e.index).collect()))
                .collect(),
        };
        Ok(serde_json::to_string(&snap)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    fn class(class: usize, n: usize, offset: f64) -> ClassData {
        ClassData {
            class,
            entries: (0..n)
                .map(|i| Exemplar {
                    index: class * 1000 + i,
                    record: FeatureRecord {
                        features: vec![offset + i as f64, (i * i) as f64 * 0.1],
                        label: class,
                        split: if i % 5 == 4 { Split::Val } else { Split::Train },
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn herd_single_sample() {
        assert_eq!(herd_order(&[vec![3.0, 1.0]]), vec![0]);
    }

    #[test]
    fn herd_first_pick_hand_computed() {
        // mean (1,1); distances sqrt2, 1, 1, sqrt8 -> tie 1/2 resolved low
        let f = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0]];
        let order = herd_order(&f);
        assert_eq!(order[0], 1);
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn herd_works_in_f32() {
        let f: Vec<Vec<f32>> = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0]];
        assert_eq!(herd_order(&f)[0], 1);
    }

    #[test]
    fn quota_rule() {
        let q = quotas(10, &[0, 1, 2]);
        assert_eq!(q.values().copied().collect::<Vec<_>>(), vec![4, 3, 3]);
        let q = quotas(2, &[5, 3, 9]);
        assert_eq!((q[&3], q[&5], q[&9]), (1, 1, 0));
    }

    #[test]
    fn short_class_stores_what_it_has() {
        let m = MemoryBuffer::new(10)
            .admit_and_rebalance(vec![class(0, 2, 0.0), class(1, 8, 50.0), class(2, 8, 90.0)])
            .unwrap();
        assert_eq!(m.exemplars(0).len(), 2);
        assert_eq!(m.exemplars(1).len(), 3);
        assert_eq!(m.exemplars(2).len(), 3);
    }

    #[test]
    fn rebalance_keeps_prefix_and_is_idempotent() {
        let m1 = MemoryBuffer::new(12)
            .admit_and_rebalance(vec![class(0, 10, 0.0), class(1, 10, 50.0)])
            .unwrap();
        let m2 = m1.admit_and_rebalance(vec![class(2, 10, 100.0)]).unwrap();
        for c in [0, 1] {
            let old = m1.exemplars(c);
            let new = m2.exemplars(c);
            assert_eq!(new.len(), 4);
            assert_eq!(new, &old[..new.len()]);
        }
        assert!(m2.total() <= 12);
        let again = m2.admit_and_rebalance(vec![]).unwrap();
        assert_eq!(again.per_class, m2.per_class);
        assert!(m2.admit_and_rebalance(vec![class(1, 3, 0.0)]).is_err());
    }

    #[test]
    fn memory_table_preserves_flags() {
        let empty = MemoryBuffer::new(5).memory_dataset(2, 3).unwrap();
        assert!(empty.is_empty());
        let m = MemoryBuffer::new(100).admit_and_rebalance(vec![class(0, 10, 0.0)]).unwrap();
        let t = m.memory_dataset(2, 1).unwrap();
        assert_eq!(t.records().iter().filter(|r| r.split == Split::Val).count(), 2);
        assert_eq!(t.census()[&0], 8);
    }

    #[test]
    fn snapshot_lists_record_indices() {
        let m = MemoryBuffer::new(3).admit_and_rebalance(vec![class(1, 4, 0.0)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.snapshot_json().unwrap()).unwrap();
        assert_eq!(v["capacity"], 3);
        assert_eq!(v["state_index"], 1);
        assert_eq!(v["classes"]["1"].as_array().unwrap().len(), 3);
    }
}
