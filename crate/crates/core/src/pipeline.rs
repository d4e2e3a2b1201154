//! Hyperparameter selection over validation folds and final evaluation.
//!
//! ZSL selection picks the λ that maximizes unseen-class accuracy among
//! validation classes. GZSL selection picks the λ whose calibrated harmonic
//! mean (at its own best γ) is highest, scoring seen-validation and
//! unseen-validation samples against all non-test classes. The final model
//! is refit on every non-test sample outside the seen test pool.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{ausuc, predict, select_gamma_pooled, tradeoff_at, tradeoff_curve, within_population_accuracies, TradeoffPoint};
use crate::data::{Dataset, GzslReport, GzslRun, GzslSplit, GzslStd, MeanStd, ScoreMatrix};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, harmonic_mean, AccuracyKind};
use crate::models::{fit, FitResult, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Model template; its λ is replaced by grid values.
    pub model: ModelSpec,
    pub lambda_grid: Vec<f64>,
    pub acc_kind: AccuracyKind,
    pub n_runs: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, lambda_grid: Vec<f64>) -> Self {
        Self {
            model,
            lambda_grid,
            acc_kind: AccuracyKind::PerClass,
            n_runs: 5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidConfig("lambda grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidConfig("lambda values must be finite and >= 0".into()));
        }
        if self.lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("lambda grid must be strictly increasing".into()));
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
        }
        self.model.validate()
    }

    /// Seeds of the runs; closed-form models ignore them.
    fn run_seeds(&self) -> Vec<u64> {
        (0..self.n_runs as u64).map(|r| self.seed.wrapping_add(r)).collect()
    }

    fn for_run(&self, seed: u64) -> Self {
        Self {
            model: self.model.with_seed(seed),
            ..self.clone()
        }
    }
}

/// Which selection protocol supplies λ for the final GZSL model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    Zsl,
    #[default]
    Gzsl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GzslOptions {
    /// Subtract a selected γ from seen-class scores; otherwise γ = 0.
    pub calibrate: bool,
    pub lambda_mode: LambdaMode,
}

impl Default for GzslOptions {
    fn default() -> Self {
        Self {
            calibrate: true,
            lambda_mode: LambdaMode::Gzsl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda_star: f64,
    /// Fold-averaged validation accuracy for each grid value.
    pub fold_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GzslSelection {
    pub lambda_star: f64,
    /// γ maximizing the fold-averaged harmonic mean at `lambda_star`.
    pub gamma_star: f64,
    /// Best fold-averaged harmonic mean for each grid value.
    pub fold_mean: Vec<f64>,
    /// The maximizing γ for each grid value.
    pub gammas: Vec<f64>,
}

/// First index of the maximum; ties keep the earlier (smaller λ) entry.
fn argmax_first(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

fn check_folds(folds: &[GzslSplit]) -> Result<()> {
    if folds.is_empty() {
        return Err(Error::InvalidSplit("no validation folds".into()));
    }
    Ok(())
}

fn labels_of(d: &Dataset, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| d.labels()[i]).collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Validation accuracy of unseen-validation samples among validation classes.
fn zsl_fold_score(d: &Dataset, fold: &GzslSplit, spec: &ModelSpec, kind: AccuracyKind) -> Result<f64> {
    let model = fit(d, &fold.train_idx, spec)?;
    let classes = &fold.partition.val_classes;
    let scores = model.score(d, &fold.unseen_val_idx, classes, vec![false; classes.len()])?;
    accuracy(&predict(&scores), &labels_of(d, &fold.unseen_val_idx), kind)
}

/// λ maximizing the fold-averaged ZSL accuracy.
pub fn select_lambda_zsl(d: &Dataset, folds: &[GzslSplit], cfg: &ExperimentConfig) -> Result<LambdaSelection> {
    cfg.validate()?;
    check_folds(folds)?;
    let fold_mean = cfg
        .lambda_grid
        .par_iter()
        .map(|&lambda| {
            let spec = cfg.model.with_lambda(lambda);
            let per_fold = folds
                .iter()
                .map(|f| zsl_fold_score(d, f, &spec, cfg.acc_kind))
                .collect::<Result<Vec<_>>>()?;
            Ok(mean(&per_fold))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LambdaSelection {
        lambda_star: cfg.lambda_grid[argmax_first(&fold_mean)],
        fold_mean,
    })
}

/// Scores seen-validation and unseen-validation samples against all
/// non-test classes; train classes are marked seen.
pub fn score_gzsl_validation(d: &Dataset, fold: &GzslSplit, model: &FitResult) -> Result<(ScoreMatrix, Vec<usize>)> {
    if fold.seen_val_idx.is_empty() {
        return Err(Error::InvalidSplit("seen validation pool is empty".into()));
    }
    let idx: Vec<usize> = fold.seen_val_idx.iter().chain(&fold.unseen_val_idx).copied().collect();
    let candidates = fold.partition.seen_classes();
    let mask = candidates
        .iter()
        .map(|c| fold.partition.train_classes.binary_search(c).is_ok())
        .collect();
    Ok((model.score(d, &idx, &candidates, mask)?, labels_of(d, &idx)))
}

/// Joint (λ, γ) selection maximizing the fold-averaged calibrated harmonic mean.
///
/// For each λ the γ is the one maximizing the mean over folds of the
/// harmonic mean, so all folds share a single calibration.
pub fn select_lambda_gamma_gzsl(d: &Dataset, folds: &[GzslSplit], cfg: &ExperimentConfig) -> Result<GzslSelection> {
    cfg.validate()?;
    check_folds(folds)?;
    let per_lambda = cfg
        .lambda_grid
        .par_iter()
        .map(|&lambda| {
            let spec = cfg.model.with_lambda(lambda);
            let scored = folds
                .iter()
                .map(|f| score_gzsl_validation(d, f, &fit(d, &f.train_idx, &spec)?))
                .collect::<Result<Vec<_>>>()?;
            let sets: Vec<(&ScoreMatrix, &[usize])> = scored.iter().map(|(s, t)| (s, t.as_slice())).collect();
            select_gamma_pooled(&sets, cfg.acc_kind)
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let fold_mean: Vec<f64> = per_lambda.iter().map(|p| p.1).collect();
    let gammas: Vec<f64> = per_lambda.iter().map(|p| p.0).collect();
    let best = argmax_first(&fold_mean);
    Ok(GzslSelection {
        lambda_star: cfg.lambda_grid[best],
        gamma_star: gammas[best],
        fold_mean,
        gammas,
    })
}

/// Samples the final model is refit on: train, seen validation and unseen validation.
pub fn refit_pool(split: &GzslSplit) -> Vec<usize> {
    let mut idx: Vec<usize> = split
        .train_idx
        .iter()
        .chain(&split.seen_val_idx)
        .chain(&split.unseen_val_idx)
        .copied()
        .collect();
    idx.sort_unstable();
    idx
}

/// Scores seen-test and unseen-test samples against every partition class;
/// train and validation classes are marked seen.
pub fn score_gzsl_test(d: &Dataset, split: &GzslSplit, model: &FitResult) -> Result<(ScoreMatrix, Vec<usize>)> {
    let idx: Vec<usize> = split.seen_test_idx.iter().chain(&split.unseen_test_idx).copied().collect();
    let seen = split.partition.seen_classes();
    let mut candidates: Vec<usize> = seen.iter().chain(&split.partition.test_classes).copied().collect();
    candidates.sort_unstable();
    let mask = candidates.iter().map(|c| seen.binary_search(c).is_ok()).collect();
    Ok((model.score(d, &idx, &candidates, mask)?, labels_of(d, &idx)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GzslEvaluation {
    pub point: TradeoffPoint,
    pub ausuc: f64,
    pub acc_unseen_in_unseen: f64,
    pub acc_seen_in_seen: f64,
    pub curve: Vec<TradeoffPoint>,
}

/// Refits `spec` on the refit pool and evaluates the test pools at `gamma`.
pub fn evaluate_gzsl(d: &Dataset, split: &GzslSplit, spec: &ModelSpec, gamma: f64, kind: AccuracyKind) -> Result<GzslEvaluation> {
    let model = fit(d, &refit_pool(split), spec)?;
    let (scores, truth) = score_gzsl_test(d, split, &model)?;
    let point = tradeoff_at(&scores, &truth, gamma, kind)?;
    let curve = tradeoff_curve(&scores, &truth, kind)?;
    let (acc_unseen_in_unseen, acc_seen_in_seen) = within_population_accuracies(&scores, &truth, kind)?;
    Ok(GzslEvaluation {
        point,
        ausuc: ausuc(&scores, &truth, kind)?,
        acc_unseen_in_unseen,
        acc_seen_in_seen,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZslEvaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

/// Refits `spec` on the refit pool and classifies unseen-test samples among test classes.
pub fn evaluate_zsl(d: &Dataset, split: &GzslSplit, spec: &ModelSpec, kind: AccuracyKind) -> Result<ZslEvaluation> {
    let model = fit(d, &refit_pool(split), spec)?;
    let classes = &split.partition.test_classes;
    let scores = model.score(d, &split.unseen_test_idx, classes, vec![false; classes.len()])?;
    let predictions = predict(&scores);
    Ok(ZslEvaluation {
        accuracy: accuracy(&predictions, &labels_of(d, &split.unseen_test_idx), kind)?,
        predictions,
    })
}

/// The final split is `folds[0]`; all folds must share its test pools.
fn final_split(folds: &[GzslSplit]) -> Result<&GzslSplit> {
    check_folds(folds)?;
    let first = &folds[0];
    for f in &folds[1..] {
        if f.partition.test_classes != first.partition.test_classes || f.seen_test_idx != first.seen_test_idx {
            return Err(Error::InvalidSplit("validation folds disagree on the test pools".into()));
        }
    }
    Ok(first)
}

fn gzsl_run(d: &Dataset, folds: &[GzslSplit], cfg: &ExperimentConfig, opts: GzslOptions, seed: u64) -> Result<GzslRun> {
    let split = final_split(folds)?;
    let (lambda, gamma) = match (opts.lambda_mode, opts.calibrate) {
        (LambdaMode::Zsl, false) => (select_lambda_zsl(d, folds, cfg)?.lambda_star, 0.0),
        (LambdaMode::Zsl, true) => {
            let lambda = select_lambda_zsl(d, folds, cfg)?.lambda_star;
            let fixed = ExperimentConfig {
                lambda_grid: vec![lambda],
                ..cfg.clone()
            };
            (lambda, select_lambda_gamma_gzsl(d, folds, &fixed)?.gamma_star)
        }
        (LambdaMode::Gzsl, calibrate) => {
            let sel = select_lambda_gamma_gzsl(d, folds, cfg)?;
            (sel.lambda_star, if calibrate { sel.gamma_star } else { 0.0 })
        }
    };
    let eval = evaluate_gzsl(d, split, &cfg.model.with_lambda(lambda), gamma, cfg.acc_kind)?;
    Ok(GzslRun {
        seed,
        lambda_star: lambda,
        gamma_star: gamma,
        acc_unseen_in_all: eval.point.acc_unseen_in_all,
        acc_seen_in_all: eval.point.acc_seen_in_all,
        harmonic_mean: eval.point.harmonic_mean(),
        ausuc: eval.ausuc,
        acc_unseen_in_unseen: eval.acc_unseen_in_unseen,
        acc_seen_in_seen: eval.acc_seen_in_seen,
    })
}

/// Most frequently selected value; ties go to the smaller value.
fn modal_lambda(values: &[f64]) -> f64 {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v.to_bits()).or_default() += 1;
    }
    let mut best = (f64::INFINITY, 0usize);
    for (bits, n) in counts {
        let v = f64::from_bits(bits);
        if n > best.1 || (n == best.1 && v < best.0) {
            best = (v, n);
        }
    }
    best.0
}

/// Full GZSL protocol on `folds` (the first fold doubles as the test split).
///
/// The protocol repeats `n_runs` times with seeds `seed, seed + 1, …`.
/// Only seeded model families consume the seed.
pub fn run_gzsl_evaluation(d: &Dataset, folds: &[GzslSplit], cfg: &ExperimentConfig, opts: GzslOptions) -> Result<GzslReport> {
    cfg.validate()?;
    let runs = cfg
        .run_seeds()
        .into_iter()
        .map(|seed| gzsl_run(d, folds, &cfg.for_run(seed), opts, seed))
        .collect::<Result<Vec<_>>>()?;
    let stat = |f: fn(&GzslRun) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
    let (au, acc_s, h, area) = (
        stat(|r| r.acc_unseen_in_all),
        stat(|r| r.acc_seen_in_all),
        stat(|r| r.harmonic_mean),
        stat(|r| r.ausuc),
    );
    let report = GzslReport {
        acc_unseen_in_all: au.mean,
        acc_seen_in_all: acc_s.mean,
        harmonic_mean: harmonic_mean(au.mean, acc_s.mean),
        ausuc: area.mean,
        acc_unseen_in_unseen: stat(|r| r.acc_unseen_in_unseen).mean,
        acc_seen_in_seen: stat(|r| r.acc_seen_in_seen).mean,
        gamma_star: stat(|r| r.gamma_star).mean,
        lambda_star: modal_lambda(&runs.iter().map(|r| r.lambda_star).collect::<Vec<_>>()),
        seed: cfg.seed,
        grid: cfg.lambda_grid.clone(),
        n_runs: runs.len(),
        std: GzslStd {
            acc_unseen_in_all: au.std,
            acc_seen_in_all: acc_s.std,
            harmonic_mean: h.std,
            ausuc: area.std,
        },
        runs,
    };
    report.validate()?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZslRun {
    pub seed: u64,
    pub lambda_star: f64,
    pub acc_unseen_in_unseen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZslReport {
    /// Mean over runs of `A_{U→Cu}` on the unseen test pool, in percent.
    pub acc_unseen_in_unseen: f64,
    pub std: f64,
    pub lambda_star: f64,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub n_runs: usize,
    pub runs: Vec<ZslRun>,
}

/// Classical ZSL protocol: λ*_ZSL on the folds, refit, test among test classes.
pub fn run_zsl_evaluation(d: &Dataset, folds: &[GzslSplit], cfg: &ExperimentConfig) -> Result<ZslReport> {
    cfg.validate()?;
    let split = final_split(folds)?;
    let runs = cfg
        .run_seeds()
        .into_iter()
        .map(|seed| {
            let run_cfg = cfg.for_run(seed);
            let lambda = select_lambda_zsl(d, folds, &run_cfg)?.lambda_star;
            let eval = evaluate_zsl(d, split, &run_cfg.model.with_lambda(lambda), cfg.acc_kind)?;
            Ok(ZslRun {
                seed,
                lambda_star: lambda,
                acc_unseen_in_unseen: eval.accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let acc = MeanStd::of(&runs.iter().map(|r| r.acc_unseen_in_unseen).collect::<Vec<_>>());
    Ok(ZslReport {
        acc_unseen_in_unseen: acc.mean,
        std: acc.std,
        lambda_star: modal_lambda(&runs.iter().map(|r| r.lambda_star).collect::<Vec<_>>()),
        seed: cfg.seed,
        grid: cfg.lambda_grid.clone(),
        n_runs: runs.len(),
        runs,
    })
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        }
    }
}
