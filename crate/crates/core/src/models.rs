//! Reference scorers.
//!
//! Two closed-form ridge embeddings and the bilinear hinge-rank family
//! (ALE, DeViSE, SJE). Every model learns `W ∈ R^{K×D}` and exposes the
//! same fit / score surface through [`fit`] and [`FitResult::score`].

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ScoreMatrix};
use crate::error::{Error, Result};
use crate::linalg::solve_spd;

/// How the hinge terms of one sample are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingVariant {
    /// Rank-weighted sum.
    Ale,
    /// Plain sum.
    Devise,
    /// Largest term only.
    Sje,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Margin as a fraction of the mean absolute initial score.
    pub margin_fraction: f64,
    /// Initial weights are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 10,
            margin_fraction: 0.1,
            init_scale: 1e-2,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.margin_fraction > 0.0) || !self.margin_fraction.is_finite() {
            return Err(Error::InvalidConfig("margin_fraction must be > 0".into()));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::InvalidConfig("init_scale must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    /// Ridge map from visual features to attributes, scored in attribute space.
    LinearVs,
    /// Ridge map from attributes to visual features, scored in feature space.
    LinearSv,
    BilinearRanking { variant: RankingVariant, sgd: SgdConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub lambda: f64,
}

impl ModelSpec {
    pub fn linear_vs(lambda: f64) -> Self {
        Self {
            family: ModelFamily::LinearVs,
            lambda,
        }
    }

    pub fn linear_sv(lambda: f64) -> Self {
        Self {
            family: ModelFamily::LinearSv,
            lambda,
        }
    }

    pub fn bilinear(variant: RankingVariant, sgd: SgdConfig, lambda: f64) -> Self {
        Self {
            family: ModelFamily::BilinearRanking { variant, sgd },
            lambda,
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    /// Whether fitting depends on a random seed.
    pub fn is_seeded(&self) -> bool {
        matches!(self.family, ModelFamily::BilinearRanking { .. })
    }

    /// Same spec with the SGD seed replaced; closed-form specs are returned as is.
    pub fn with_seed(self, seed: u64) -> Self {
        match self.family {
            ModelFamily::BilinearRanking { variant, sgd } => Self {
                family: ModelFamily::BilinearRanking {
                    variant,
                    sgd: SgdConfig { seed, ..sgd },
                },
                ..self
            },
            _ => self,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if let ModelFamily::BilinearRanking { sgd, .. } = &self.family {
            sgd.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: Array2<f64>,
    pub spec: ModelSpec,
    pub target_matrix_rows: usize,
}

impl FitResult {
    /// Scores samples `idx` of `d` against `candidates`.
    pub fn score(&self, d: &Dataset, idx: &[usize], candidates: &[usize], seen_mask: Vec<bool>) -> Result<ScoreMatrix> {
        let x = d.features().select(Axis(0), idx);
        let s = d.prototypes().select(Axis(0), candidates);
        let w = self.weights.view();
        let scores = match self.spec.family {
            ModelFamily::LinearVs => score_linear_vs(w, x.view(), s.view()),
            ModelFamily::LinearSv => score_linear_sv(w, x.view(), s.view()),
            ModelFamily::BilinearRanking { .. } => score_bilinear(w, x.view(), s.view()),
        };
        ScoreMatrix::new(scores, candidates.to_vec(), seen_mask)
    }

    /// Attributes predicted as `W x` for each row of `x`.
    pub fn predict_attributes(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weights.t())
    }
}

/// Stacks the prototype of each sample's label (`T` with row `n = s_{y_n}`).
pub fn build_target_matrix(d: &Dataset, idx: &[usize]) -> Array2<f64> {
    let labels: Vec<usize> = idx.iter().map(|&i| d.labels()[i]).collect();
    d.prototypes().select(Axis(0), &labels)
}

fn check_rows(x: ArrayView2<'_, f64>, t: ArrayView2<'_, f64>) -> Result<usize> {
    if x.nrows() != t.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows vs {} target rows",
            x.nrows(),
            t.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(x.nrows())
}

/// Minimizer of `‖X Wᵀ − T‖²_F / N + λ‖W‖²_F`:
/// `W = Tᵀ X (XᵀX + λ N I_D)⁻¹`.
pub fn fit_linear_vs(x: ArrayView2<'_, f64>, t: ArrayView2<'_, f64>, lambda: f64) -> Result<Array2<f64>> {
    let n = check_rows(x, t)?;
    let mut gram = x.t().dot(&x);
    gram.diag_mut().mapv_inplace(|v| v + lambda * n as f64);
    // gram is symmetric, so W = (gram⁻¹ Xᵀ T)ᵀ
    let z = solve_spd(gram.view(), x.t().dot(&t).view())?;
    Ok(z.reversed_axes())
}

/// Minimizer of `‖X − T W‖²_F / N + λ‖W‖²_F`:
/// `W = (TᵀT + λ N I_K)⁻¹ Tᵀ X`.
pub fn fit_linear_sv(x: ArrayView2<'_, f64>, t: ArrayView2<'_, f64>, lambda: f64) -> Result<Array2<f64>> {
    let n = check_rows(x, t)?;
    let mut gram = t.t().dot(&t);
    gram.diag_mut().mapv_inplace(|v| v + lambda * n as f64);
    solve_spd(gram.view(), t.t().dot(&x).view())
}

/// Value and gradient (w.r.t. `W`) of a closed-form family's ridge objective.
///
/// Returns `None` for the bilinear family, which has no such objective.
pub fn ridge_objective(
    family: &ModelFamily,
    x: ArrayView2<'_, f64>,
    t: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    lambda: f64,
) -> Option<(f64, Array2<f64>)> {
    let n = x.nrows() as f64;
    let (value, mut grad) = match family {
        ModelFamily::LinearVs => {
            let r = x.dot(&w.t()) - t;
            let v = r.iter().map(|e| e * e).sum::<f64>() / n;
            (v, r.t().dot(&x) * (2.0 / n))
        }
        ModelFamily::LinearSv => {
            let r = t.dot(&w) - x;
            let v = r.iter().map(|e| e * e).sum::<f64>() / n;
            (v, t.t().dot(&r) * (2.0 / n))
        }
        ModelFamily::BilinearRanking { .. } => return None,
    };
    grad.scaled_add(2.0 * lambda, &w);
    let reg = lambda * w.iter().map(|e| e * e).sum::<f64>();
    Some((value + reg, grad))
}

/// `score(m, c) = −‖W x_m − s_c‖²`.
pub fn score_linear_vs(w: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>, s: ArrayView2<'_, f64>) -> Array2<f64> {
    let projected = x.dot(&w.t());
    neg_sq_distances(projected.view(), s)
}

/// `score(m, c) = −‖x_m − s_cᵀ W‖²`.
pub fn score_linear_sv(w: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>, s: ArrayView2<'_, f64>) -> Array2<f64> {
    let projected = s.dot(&w);
    neg_sq_distances(x, projected.view())
}

/// `score(m, c) = s_cᵀ W x_m`.
pub fn score_bilinear(w: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>, s: ArrayView2<'_, f64>) -> Array2<f64> {
    x.dot(&w.t()).dot(&s.t())
}

fn neg_sq_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let a_sq: Array1<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let b_sq: Array1<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut out = a.dot(&b.t());
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = -(a_sq[i] - 2.0 * *v + b_sq[j]).max(0.0);
    }
    out
}

/// ALE rank weight `β(r) = (Σ_{i=1..r} 1/i) / r`, with `β(0) = 0`.
pub fn ale_rank_weight(r: usize) -> f64 {
    if r == 0 {
        return 0.0;
    }
    (1..=r).map(|i| 1.0 / i as f64).sum::<f64>() / r as f64
}

/// Hinge rank loss of one sample; `y` is a row index into `s`.
pub fn hinge_rank_loss(
    w: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    y: usize,
    s: ArrayView2<'_, f64>,
    margin: f64,
    variant: RankingVariant,
) -> f64 {
    hinge_terms(w, x, y, s, margin, variant).0
}

/// Loss and its gradient with respect to `W`.
pub fn hinge_rank_loss_grad(
    w: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    y: usize,
    s: ArrayView2<'_, f64>,
    margin: f64,
    variant: RankingVariant,
) -> (f64, Array2<f64>) {
    let (loss, direction) = hinge_terms(w, x, y, s, margin, variant);
    let grad = outer(direction.view(), x);
    (loss, grad)
}

/// Loss and the vector `g` with `∂loss/∂W = g xᵀ`.
fn hinge_terms(
    w: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    y: usize,
    s: ArrayView2<'_, f64>,
    margin: f64,
    variant: RankingVariant,
) -> (f64, Array1<f64>) {
    let wx = w.dot(&x);
    let f = s.dot(&wx);
    let mut g = Array1::<f64>::zeros(s.ncols());
    // `max` below would silently turn NaN hinge terms into 0
    if f.iter().any(|v| !v.is_finite()) {
        return (f64::NAN, g);
    }
    let fy = f[y];
    let terms: Vec<(usize, f64)> = (0..s.nrows())
        .filter(|&c| c != y)
        .map(|c| (c, (margin + f[c] - fy).max(0.0)))
        .collect();
    let sy = s.row(y);
    let mut add = |c: usize, weight: f64| {
        g.scaled_add(weight, &s.row(c));
        g.scaled_add(-weight, &sy);
    };
    let violators = terms.iter().filter(|(_, l)| *l > 0.0);
    let loss = match variant {
        RankingVariant::Devise => {
            violators.for_each(|&(c, _)| add(c, 1.0));
            terms.iter().map(|(_, l)| l).sum()
        }
        RankingVariant::Ale => {
            let r = terms.iter().filter(|(_, l)| *l > 0.0).count();
            let beta = ale_rank_weight(r);
            violators.for_each(|&(c, _)| add(c, beta));
            beta * terms.iter().map(|(_, l)| l).sum::<f64>()
        }
        RankingVariant::Sje => {
            let worst = terms
                .iter()
                .fold(None::<(usize, f64)>, |best, &(c, l)| match best {
                    Some((_, bl)) if bl >= l => best,
                    _ => Some((c, l)),
                });
            match worst {
                Some((c, l)) if l > 0.0 => {
                    add(c, 1.0);
                    l
                }
                _ => 0.0,
            }
        }
    };
    (loss, g)
}

fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

const MARGIN_SAMPLE_PAIRS: usize = 256;

/// SGD on the per-sample hinge rank loss plus `λ‖W‖²_F / N`.
///
/// The ranking is over the distinct classes present in `idx`.
pub fn fit_bilinear_ranking(d: &Dataset, idx: &[usize], spec: &ModelSpec) -> Result<FitResult> {
    spec.validate()?;
    let ModelFamily::BilinearRanking { variant, sgd } = spec.family else {
        return Err(Error::InvalidConfig("fit_bilinear_ranking needs a bilinear spec".into()));
    };
    if idx.is_empty() {
        return Err(Error::EmptyInput);
    }
    let classes: Vec<usize> = {
        let mut v: Vec<usize> = idx.iter().map(|&i| d.labels()[i]).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let row_of: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(r, &c)| (c, r)).collect();
    let s = d.prototypes().select(Axis(0), &classes);
    let x = d.features();
    let (k, dim) = (d.attribute_dim(), d.feature_dim());

    let mut rng = ChaCha8Rng::seed_from_u64(sgd.seed);
    let mut w = Array2::<f64>::zeros((k, dim));
    if sgd.init_scale > 0.0 {
        w.mapv_inplace(|_| rng.random_range(-sgd.init_scale..=sgd.init_scale));
    }

    rng.set_stream(1);
    let mean_abs_score = (0..MARGIN_SAMPLE_PAIRS)
        .map(|_| {
            let i = idx[rng.random_range(0..idx.len())];
            let c = rng.random_range(0..classes.len());
            s.row(c).dot(&w.dot(&x.row(i))).abs()
        })
        .sum::<f64>()
        / MARGIN_SAMPLE_PAIRS as f64;
    let margin = sgd.margin_fraction * mean_abs_score;

    rng.set_stream(2);
    let n = idx.len() as f64;
    let decay = 1.0 - sgd.learning_rate * 2.0 * spec.lambda / n;
    let mut order = idx.to_vec();
    for epoch in 0..sgd.epochs {
        order.shuffle(&mut rng);
        for (step, &i) in order.iter().enumerate() {
            let xi = x.row(i);
            let (loss, g) = hinge_terms(w.view(), xi, row_of[&d.labels()[i]], s.view(), margin, variant);
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch, step });
            }
            // W ← W − lr (g xᵀ + 2λW/N)
            w *= decay;
            let step_dir = outer(g.view(), xi);
            w.scaled_add(-sgd.learning_rate, &step_dir);
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedLoss { epoch, step: order.len() });
        }
    }
    Ok(FitResult {
        weights: w,
        spec: *spec,
        target_matrix_rows: idx.len(),
    })
}

/// Fits `spec` on samples `idx` of `d`.
pub fn fit(d: &Dataset, idx: &[usize], spec: &ModelSpec) -> Result<FitResult> {
    spec.validate()?;
    let weights = match spec.family {
        ModelFamily::LinearVs | ModelFamily::LinearSv => {
            let x = d.features().select(Axis(0), idx);
            let t = build_target_matrix(d, idx);
            if spec.family == ModelFamily::LinearVs {
                fit_linear_vs(x.view(), t.view(), spec.lambda)?
            } else {
                fit_linear_sv(x.view(), t.view(), spec.lambda)?
            }
        }
        ModelFamily::BilinearRanking { .. } => return fit_bilinear_ranking(d, idx, spec),
    };
    Ok(FitResult {
        weights,
        spec: *spec,
        target_matrix_rows: idx.len(),
    })
}
