//! Accuracy metrics, harmonic mean and the attribute / variance diagnostics.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GzslSplit};
use crate::error::{Error, Result};
use crate::models::{fit, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyKind {
    PerSample,
    #[default]
    PerClass,
}

/// `100 · mean(pred == truth)`.
pub fn per_sample_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            got: pred.len(),
            expected: truth.len(),
        });
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / truth.len() as f64)
}

/// Mean over `classes` of each class's own accuracy, as a percentage.
pub fn per_class_accuracy(pred: &[usize], truth: &[usize], classes: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            got: pred.len(),
            expected: truth.len(),
        });
    }
    if classes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut tally: BTreeMap<usize, (usize, usize)> = classes.iter().map(|&c| (c, (0, 0))).collect();
    for (p, t) in pred.iter().zip(truth) {
        if let Some((correct, count)) = tally.get_mut(t) {
            *count += 1;
            if p == t {
                *correct += 1;
            }
        }
    }
    if let Some((&c, _)) = tally.iter().find(|(_, t)| t.1 == 0) {
        return Err(Error::EmptyClass(c));
    }
    let n_classes = tally.len() as u128;
    // Sum the class rates as one fraction over the lcm of the class sizes,
    // so balanced inputs divide the same integers as per-sample accuracy.
    let exact = tally.values().try_fold((0u128, 1u128), |(num, den), &(correct, count)| {
        let count = count as u128;
        let l = den / gcd(den, count) * count;
        let num = num * (l / den) + correct as u128 * (l / count);
        (l * n_classes < EXACT_LIMIT).then_some((num, l))
    });
    Ok(match exact {
        Some((num, den)) => 100.0 * num as f64 / (den * n_classes) as f64,
        None => {
            let sum: f64 = tally.values().map(|&(c, n)| c as f64 / n as f64).sum();
            100.0 * sum / tally.len() as f64
        }
    })
}

/// Integers below this convert to `f64` exactly.
const EXACT_LIMIT: u128 = 1 << 53;

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Accuracy of the given kind over the classes present in `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize], kind: AccuracyKind) -> Result<f64> {
    match kind {
        AccuracyKind::PerSample => per_sample_accuracy(pred, truth),
        AccuracyKind::PerClass => {
            let mut classes = truth.to_vec();
            classes.sort_unstable();
            classes.dedup();
            per_class_accuracy(pred, truth, &classes)
        }
    }
}

/// `2ab / (a + b)`, defined as 0 when both are 0.
pub fn harmonic_mean(a_u: f64, a_s: f64) -> f64 {
    if a_u + a_s == 0.0 {
        0.0
    } else {
        2.0 * a_u * a_s / (a_u + a_s)
    }
}

/// Mean squared error over all entries.
pub fn attribute_mse(predicted: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    if predicted.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "predicted {:?} vs target {:?}",
            predicted.dim(),
            target.dim()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = predicted
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok(sum / predicted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCurves {
    pub lambdas: Vec<f64>,
    pub seen: Vec<f64>,
    pub unseen: Vec<f64>,
}

/// Attribute MSE of a visual→semantic ridge model as a function of λ.
///
/// The model is fit on `train_idx`. The seen curve uses the seen-test
/// samples of training classes, the unseen curve uses `unseen_test_idx`.
pub fn mse_vs_lambda_curves(d: &Dataset, split: &GzslSplit, grid: &[f64]) -> Result<MseCurves> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let train = &split.partition.train_classes;
    let seen_idx: Vec<usize> = split
        .seen_test_idx
        .iter()
        .copied()
        .filter(|&i| train.binary_search(&d.labels()[i]).is_ok())
        .collect();
    let mut curves = MseCurves {
        lambdas: grid.to_vec(),
        seen: Vec::with_capacity(grid.len()),
        unseen: Vec::with_capacity(grid.len()),
    };
    for &lambda in grid {
        let model = fit(d, &split.train_idx, &ModelSpec::linear_vs(lambda))?;
        for (idx, out) in [(&seen_idx, &mut curves.seen), (&split.unseen_test_idx, &mut curves.unseen)] {
            let x = d.features().select(Axis(0), idx);
            let target = crate::models::build_target_matrix(d, idx);
            out.push(attribute_mse(model.predict_attributes(x.view()).view(), target.view())?);
        }
    }
    Ok(curves)
}

/// Intra-class and inter-class variance of a feature matrix.
///
/// `intra` is the mean over samples of the squared distance to their class
/// centroid; `inter` is the mean over classes of the squared distance from
/// the class centroid to the mean of centroids.
pub fn class_variances(x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, f64)> {
    if labels.len() != x.nrows() {
        return Err(Error::LengthMismatch {
            what: "labels",
            got: labels.len(),
            expected: x.nrows(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![Array1::<f64>::zeros(x.ncols()); n_classes];
    let mut counts = vec![0usize; n_classes];
    for (row, &y) in x.rows().into_iter().zip(labels) {
        sums[y] += &row;
        counts[y] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    let centroids: Vec<Array1<f64>> = sums.into_iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();
    let intra = x
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| (&row - &centroids[y]).mapv(|v| v * v).sum())
        .sum::<f64>()
        / labels.len() as f64;
    let grand = centroids.iter().fold(Array1::<f64>::zeros(x.ncols()), |acc, c| acc + c) / n_classes as f64;
    let inter = centroids
        .iter()
        .map(|c| (c - &grand).mapv(|v| v * v).sum())
        .sum::<f64>()
        / n_classes as f64;
    Ok((intra, inter))
}
