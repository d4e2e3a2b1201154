//! Core value types: datasets, class partitions, GZSL splits, score
//! matrices and reports.
//!
//! Class ids are dense integers `0..C`. All matrices are dense row-major
//! `f64`.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Visual features, integer labels and per-class semantic prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    prototypes: Array2<f64>,
}

impl Dataset {
    /// Builds a dataset, rejecting anything that fails [`validate_dataset`].
    pub fn new(features: Array2<f64>, labels: Vec<usize>, prototypes: Array2<f64>) -> Result<Self> {
        validate_parts(features.view(), &labels, prototypes.view())?;
        Ok(Self {
            features,
            labels,
            prototypes,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn prototypes(&self) -> ArrayView2<'_, f64> {
        self.prototypes.view()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.prototypes.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn attribute_dim(&self) -> usize {
        self.prototypes.ncols()
    }

    /// Sample indices of each class, in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count()];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    /// Same dataset with every prototype row scaled to unit norm.
    pub fn with_normalized_prototypes(self) -> Result<Self> {
        let prototypes = normalize_prototypes(self.prototypes.view())?;
        Ok(Self { prototypes, ..self })
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>, Array2<f64>) {
        (self.features, self.labels, self.prototypes)
    }
}

/// Checks every dataset invariant.
pub fn validate_dataset(d: &Dataset) -> Result<()> {
    validate_parts(d.features.view(), &d.labels, d.prototypes.view())
}

fn validate_parts(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    prototypes: ArrayView2<'_, f64>,
) -> Result<()> {
    if features.nrows() == 0 {
        return Err(Error::EmptyDataset("no samples".into()));
    }
    if features.ncols() == 0 {
        return Err(Error::EmptyDataset("feature dimension is 0".into()));
    }
    if prototypes.ncols() == 0 {
        return Err(Error::EmptyDataset("attribute dimension is 0".into()));
    }
    if prototypes.nrows() < 2 {
        return Err(Error::EmptyDataset(format!(
            "need at least 2 classes, found {}",
            prototypes.nrows()
        )));
    }
    if labels.len() != features.nrows() {
        return Err(Error::LengthMismatch {
            what: "labels",
            got: labels.len(),
            expected: features.nrows(),
        });
    }
    let class_count = prototypes.nrows();
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= class_count) {
        return Err(Error::LabelOutOfRange {
            index,
            label,
            class_count,
        });
    }
    check_finite("features", features)?;
    check_finite("prototypes", prototypes)?;
    Ok(())
}

pub(crate) fn check_finite(matrix: &'static str, m: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { matrix, row, col });
        }
    }
    Ok(())
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_prototypes(prototypes: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = prototypes.to_owned();
    for (r, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroPrototype(r));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

/// Disjoint train / validation / test class sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub train_classes: Vec<usize>,
    pub val_classes: Vec<usize>,
    pub test_classes: Vec<usize>,
}

impl ClassPartition {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        let groups = [
            ("train", &self.train_classes),
            ("val", &self.val_classes),
            ("test", &self.test_classes),
        ];
        let mut seen = BTreeSet::new();
        for (name, group) in groups {
            if group.is_empty() {
                return Err(Error::InvalidPartition(format!("{name} classes are empty")));
            }
            for &c in group {
                if c >= class_count {
                    return Err(Error::InvalidPartition(format!(
                        "{name} class {c} outside [0, {class_count})"
                    )));
                }
                if !seen.insert(c) {
                    return Err(Error::InvalidPartition(format!("class {c} appears twice")));
                }
            }
        }
        Ok(())
    }

    /// Train classes followed by validation classes.
    pub fn seen_classes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .train_classes
            .iter()
            .chain(&self.val_classes)
            .copied()
            .collect();
        v.sort_unstable();
        v
    }
}

/// A class partition together with the per-sample GZSL pools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GzslSplit {
    pub partition: ClassPartition,
    pub train_idx: Vec<usize>,
    pub seen_val_idx: Vec<usize>,
    pub seen_test_idx: Vec<usize>,
    pub unseen_val_idx: Vec<usize>,
    pub unseen_test_idx: Vec<usize>,
}

impl GzslSplit {
    pub fn pools(&self) -> [(&'static str, &[usize]); 5] {
        [
            ("train", &self.train_idx),
            ("seen_val", &self.seen_val_idx),
            ("seen_test", &self.seen_test_idx),
            ("unseen_val", &self.unseen_val_idx),
            ("unseen_test", &self.unseen_test_idx),
        ]
    }

    /// Checks disjointness and label membership of every pool.
    pub fn validate(&self, d: &Dataset) -> Result<()> {
        self.partition.validate(d.class_count())?;
        let p = &self.partition;
        let train: BTreeSet<usize> = p.train_classes.iter().copied().collect();
        let val: BTreeSet<usize> = p.val_classes.iter().copied().collect();
        let test: BTreeSet<usize> = p.test_classes.iter().copied().collect();
        let mut used = vec![false; d.len()];
        for (name, pool) in self.pools() {
            for &i in pool {
                if i >= d.len() {
                    return Err(Error::InvalidSplit(format!(
                        "{name} index {i} outside dataset of {} samples",
                        d.len()
                    )));
                }
                if std::mem::replace(&mut used[i], true) {
                    return Err(Error::InvalidSplit(format!("sample {i} appears in two pools")));
                }
                let y = d.labels()[i];
                let ok = match name {
                    "train" | "seen_val" => train.contains(&y),
                    "seen_test" => train.contains(&y) || val.contains(&y),
                    "unseen_val" => val.contains(&y),
                    _ => test.contains(&y),
                };
                if !ok {
                    return Err(Error::InvalidSplit(format!(
                        "sample {i} with label {y} does not belong in the {name} pool"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Similarity scores of samples (rows) against candidate classes (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    scores: Array2<f64>,
    candidate_classes: Vec<usize>,
    seen_mask: Vec<bool>,
}

impl ScoreMatrix {
    pub fn new(scores: Array2<f64>, candidate_classes: Vec<usize>, seen_mask: Vec<bool>) -> Result<Self> {
        if scores.ncols() != candidate_classes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} score columns for {} candidate classes",
                scores.ncols(),
                candidate_classes.len()
            )));
        }
        if seen_mask.len() != candidate_classes.len() {
            return Err(Error::LengthMismatch {
                what: "seen_mask",
                got: seen_mask.len(),
                expected: candidate_classes.len(),
            });
        }
        let distinct: BTreeSet<_> = candidate_classes.iter().collect();
        if distinct.len() != candidate_classes.len() {
            return Err(Error::InvalidConfig("duplicate candidate class".into()));
        }
        check_finite("scores", scores.view())?;
        Ok(Self {
            scores,
            candidate_classes,
            seen_mask,
        })
    }

    /// Candidate columns, all marked unseen.
    pub fn unseen_only(scores: Array2<f64>, candidate_classes: Vec<usize>) -> Result<Self> {
        let mask = vec![false; candidate_classes.len()];
        Self::new(scores, candidate_classes, mask)
    }

    pub fn scores(&self) -> ArrayView2<'_, f64> {
        self.scores.view()
    }

    pub fn candidate_classes(&self) -> &[usize] {
        &self.candidate_classes
    }

    pub fn seen_mask(&self) -> &[bool] {
        &self.seen_mask
    }

    pub fn n_samples(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_candidates(&self) -> usize {
        self.candidate_classes.len()
    }

    pub fn is_seen_class(&self, class: usize) -> Option<bool> {
        self.candidate_classes
            .iter()
            .position(|&c| c == class)
            .map(|j| self.seen_mask[j])
    }

    pub(crate) fn map_scores(&self, f: impl Fn(Array2<f64>) -> Array2<f64>) -> Self {
        Self {
            scores: f(self.scores.clone()),
            candidate_classes: self.candidate_classes.clone(),
            seen_mask: self.seen_mask.clone(),
        }
    }
}

/// Mean and standard deviation of a metric over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation; a single value has std 0.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        // shifting by the first value keeps repeated values exact
        let n = values.len() as f64;
        let pivot = values[0];
        let shift = values.iter().map(|v| v - pivot).sum::<f64>() / n;
        let var = values.iter().map(|v| (v - pivot - shift).powi(2)).sum::<f64>() / n;
        Self {
            mean: pivot + shift,
            std: var.sqrt(),
        }
    }
}

/// Final GZSL test-set results.
///
/// Accuracies are percentages, `ausuc` lies in `[0, 1]`. Top-level metric
/// values are means over runs; `harmonic_mean` is recomputed from the mean
/// accuracies so that it stays consistent with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GzslReport {
    pub acc_unseen_in_all: f64,
    pub acc_seen_in_all: f64,
    pub harmonic_mean: f64,
    pub ausuc: f64,
    pub acc_unseen_in_unseen: f64,
    pub acc_seen_in_seen: f64,
    pub gamma_star: f64,
    pub lambda_star: f64,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub n_runs: usize,
    pub std: GzslStd,
    pub runs: Vec<GzslRun>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GzslStd {
    pub acc_unseen_in_all: f64,
    pub acc_seen_in_all: f64,
    pub harmonic_mean: f64,
    pub ausuc: f64,
}

/// Outcome of a single seeded run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GzslRun {
    pub seed: u64,
    pub lambda_star: f64,
    pub gamma_star: f64,
    pub acc_unseen_in_all: f64,
    pub acc_seen_in_all: f64,
    pub harmonic_mean: f64,
    pub ausuc: f64,
    pub acc_unseen_in_unseen: f64,
    pub acc_seen_in_seen: f64,
}

impl GzslReport {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("acc_unseen_in_all", self.acc_unseen_in_all),
            ("acc_seen_in_all", self.acc_seen_in_all),
            ("harmonic_mean", self.harmonic_mean),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 100]")));
            }
        }
        if !(0.0..=1.0).contains(&self.ausuc) {
            return Err(Error::InvalidConfig(format!("ausuc = {} outside [0, 1]", self.ausuc)));
        }
        let h = crate::metrics::harmonic_mean(self.acc_unseen_in_all, self.acc_seen_in_all);
        if (h - self.harmonic_mean).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "harmonic_mean {} inconsistent with components ({h})",
                self.harmonic_mean
            )));
        }
        Ok(())
    }
}
