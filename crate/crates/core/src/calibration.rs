//! Calibrated prediction and the seen/unseen trade-off.
//!
//! Subtracting `γ` from every seen-class score only changes which side
//! (seen or unseen) wins a row, never which class wins within a side. Row
//! `m` switches from its best seen class to its best unseen class at
//! `γ = max_seen(m) − max_unseen(m)`, so sweeping the sorted switch points
//! visits every distinct prediction state exactly once.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::ScoreMatrix;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, harmonic_mean, AccuracyKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub gamma: f64,
    pub acc_unseen_in_all: f64,
    pub acc_seen_in_all: f64,
}

impl TradeoffPoint {
    pub fn harmonic_mean(&self) -> f64 {
        harmonic_mean(self.acc_unseen_in_all, self.acc_seen_in_all)
    }
}

/// Best `(score, class)` over columns passing `keep`; ties go to the lower class id.
fn best_where(row: ndarray::ArrayView1<'_, f64>, classes: &[usize], keep: impl Fn(usize) -> bool) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (j, (&v, &c)) in row.iter().zip(classes).enumerate() {
        if !keep(j) {
            continue;
        }
        best = match best {
            Some((bv, bc)) if bv > v || (bv == v && bc < c) => Some((bv, bc)),
            _ => Some((v, c)),
        };
    }
    best
}

/// Row-wise argmax over candidate classes, ties broken toward the lowest class id.
pub fn predict(scores: &ScoreMatrix) -> Vec<usize> {
    let classes = scores.candidate_classes();
    scores
        .scores()
        .rows()
        .into_iter()
        .map(|row| best_where(row, classes, |_| true).map_or(usize::MAX, |(_, c)| c))
        .collect()
}

/// Subtracts `gamma` from every seen-class column.
pub fn calibrate_scores(scores: &ScoreMatrix, gamma: f64) -> ScoreMatrix {
    let mask = scores.seen_mask().to_vec();
    scores.map_scores(|mut s| {
        for (j, mut col) in s.columns_mut().into_iter().enumerate() {
            if mask[j] {
                col.mapv_inplace(|v| v - gamma);
            }
        }
        s
    })
}

#[derive(Debug, Clone, Copy)]
struct RowWinners {
    seen: (f64, usize),
    unseen: (f64, usize),
}

impl RowWinners {
    /// The γ at which this row's prediction moves from seen to unseen.
    fn switch_point(&self) -> f64 {
        self.seen.0 - self.unseen.0
    }
}

fn row_winners(scores: &ScoreMatrix) -> Result<Vec<RowWinners>> {
    let mask = scores.seen_mask();
    if !mask.iter().any(|&m| m) {
        return Err(Error::NoSeenClass);
    }
    if !mask.iter().any(|&m| !m) {
        return Err(Error::NoUnseenClass);
    }
    let classes = scores.candidate_classes();
    Ok(scores
        .scores()
        .rows()
        .into_iter()
        .map(|row| RowWinners {
            seen: best_where(row, classes, |j| mask[j]).expect("seen column exists"),
            unseen: best_where(row, classes, |j| !mask[j]).expect("unseen column exists"),
        })
        .collect())
}

/// Sorted distinct values of `γ` at which some row switches between its
/// best seen and best unseen class.
pub fn gamma_breakpoints(scores: &ScoreMatrix) -> Result<Vec<f64>> {
    let mut points: Vec<f64> = row_winners(scores)?.iter().map(RowWinners::switch_point).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    Ok(points)
}

/// Running accuracy of one population (seen or unseen ground truth).
struct Tally {
    kind: AccuracyKind,
    n: usize,
    correct: usize,
    /// class → (correct, count)
    per_class: BTreeMap<usize, (usize, usize)>,
}

impl Tally {
    fn new(kind: AccuracyKind, truths: impl Iterator<Item = usize>) -> Self {
        let mut per_class = BTreeMap::new();
        let mut n = 0;
        for t in truths {
            per_class.entry(t).or_insert((0, 0)).1 += 1;
            n += 1;
        }
        Self {
            kind,
            n,
            correct: 0,
            per_class,
        }
    }

    fn gain(&mut self, class: usize) {
        self.correct += 1;
        self.per_class.get_mut(&class).expect("tallied class").0 += 1;
    }

    fn lose(&mut self, class: usize) {
        self.correct -= 1;
        self.per_class.get_mut(&class).expect("tallied class").0 -= 1;
    }

    fn accuracy(&self) -> f64 {
        match self.kind {
            AccuracyKind::PerSample => 100.0 * self.correct as f64 / self.n as f64,
            AccuracyKind::PerClass => {
                let sum: f64 = self
                    .per_class
                    .values()
                    .map(|&(correct, count)| correct as f64 / count as f64)
                    .sum();
                100.0 * sum / self.per_class.len() as f64
            }
        }
    }
}

/// Whether each row's ground truth is a seen class.
fn truth_is_seen(scores: &ScoreMatrix, truth: &[usize]) -> Result<Vec<bool>> {
    if truth.len() != scores.n_samples() {
        return Err(Error::LengthMismatch {
            what: "truth",
            got: truth.len(),
            expected: scores.n_samples(),
        });
    }
    let is_seen: BTreeMap<usize, bool> = scores
        .candidate_classes()
        .iter()
        .copied()
        .zip(scores.seen_mask().iter().copied())
        .collect();
    let flags = truth
        .iter()
        .map(|t| is_seen.get(t).copied().ok_or(Error::UnknownClass(*t)))
        .collect::<Result<Vec<_>>>()?;
    if !flags.iter().any(|&f| f) {
        return Err(Error::MissingPopulation("seen-class"));
    }
    if !flags.iter().any(|&f| !f) {
        return Err(Error::MissingPopulation("unseen-class"));
    }
    Ok(flags)
}

fn outer_offset(lo: f64, hi: f64) -> f64 {
    1.0 + (hi - lo) + 1e-6 * lo.abs().max(hi.abs())
}

/// Trade-off points at one `γ` below every breakpoint, each midpoint
/// between consecutive breakpoints, and one `γ` above every breakpoint.
///
/// Points are in increasing `γ`; accuracies are percentages.
pub fn tradeoff_curve(scores: &ScoreMatrix, truth: &[usize], kind: AccuracyKind) -> Result<Vec<TradeoffPoint>> {
    let winners = row_winners(scores)?;
    let seen_truth = truth_is_seen(scores, truth)?;

    let mut seen = Tally::new(kind, truth.iter().zip(&seen_truth).filter(|(_, &s)| s).map(|(&t, _)| t));
    let mut unseen = Tally::new(kind, truth.iter().zip(&seen_truth).filter(|(_, &s)| !s).map(|(&t, _)| t));

    // γ → −∞: every row predicts its seen winner
    for (m, w) in winners.iter().enumerate() {
        if w.seen.1 == truth[m] {
            seen.gain(truth[m]);
        }
    }

    let mut order: Vec<usize> = (0..winners.len()).collect();
    order.sort_by(|&a, &b| winners[a].switch_point().total_cmp(&winners[b].switch_point()));
    let lo = winners[order[0]].switch_point();
    let hi = winners[order[order.len() - 1]].switch_point();
    let pad = outer_offset(lo, hi);

    let mut points = Vec::with_capacity(order.len() + 1);
    let push = |points: &mut Vec<TradeoffPoint>, gamma: f64, seen: &Tally, unseen: &Tally| {
        points.push(TradeoffPoint {
            gamma,
            acc_unseen_in_all: unseen.accuracy(),
            acc_seen_in_all: seen.accuracy(),
        });
    };
    push(&mut points, lo - pad, &seen, &unseen);

    let mut i = 0;
    while i < order.len() {
        let b = winners[order[i]].switch_point();
        while i < order.len() && winners[order[i]].switch_point() == b {
            let m = order[i];
            let w = winners[m];
            let t = truth[m];
            let tally = if seen_truth[m] { &mut seen } else { &mut unseen };
            if w.seen.1 == t {
                tally.lose(t);
            }
            if w.unseen.1 == t {
                tally.gain(t);
            }
            i += 1;
        }
        let gamma = if i < order.len() {
            0.5 * (b + winners[order[i]].switch_point())
        } else {
            hi + pad
        };
        push(&mut points, gamma, &seen, &unseen);
    }
    Ok(points)
}

/// Accuracies after calibrating with a single `gamma`.
pub fn tradeoff_at(scores: &ScoreMatrix, truth: &[usize], gamma: f64, kind: AccuracyKind) -> Result<TradeoffPoint> {
    let seen_truth = truth_is_seen(scores, truth)?;
    let pred = predict(&calibrate_scores(scores, gamma));
    let pick = |want_seen: bool| -> (Vec<usize>, Vec<usize>) {
        pred.iter()
            .zip(truth)
            .zip(&seen_truth)
            .filter(|(_, &s)| s == want_seen)
            .map(|((&p, &t), _)| (p, t))
            .unzip()
    };
    let (ps, ts) = pick(true);
    let (pu, tu) = pick(false);
    Ok(TradeoffPoint {
        gamma,
        acc_unseen_in_all: accuracy(&pu, &tu, kind)?,
        acc_seen_in_all: accuracy(&ps, &ts, kind)?,
    })
}

/// Accuracy of each population when predicting only among its own classes:
/// `(A_{U→Cu}, A_{S→Cs})`.
pub fn within_population_accuracies(scores: &ScoreMatrix, truth: &[usize], kind: AccuracyKind) -> Result<(f64, f64)> {
    let winners = row_winners(scores)?;
    let seen_truth = truth_is_seen(scores, truth)?;
    let (mut pu, mut tu, mut ps, mut ts) = (vec![], vec![], vec![], vec![]);
    for ((w, &t), &is_seen) in winners.iter().zip(truth).zip(&seen_truth) {
        if is_seen {
            ps.push(w.seen.1);
            ts.push(t);
        } else {
            pu.push(w.unseen.1);
            tu.push(t);
        }
    }
    Ok((accuracy(&pu, &tu, kind)?, accuracy(&ps, &ts, kind)?))
}

/// `γ` maximizing the harmonic mean, and that maximum.
///
/// The harmonic mean is piecewise constant between breakpoints, so the
/// sweep is exact. Ties go to the smallest `γ`.
pub fn select_gamma(scores: &ScoreMatrix, truth: &[usize], kind: AccuracyKind) -> Result<(f64, f64)> {
    let curve = tradeoff_curve(scores, truth, kind)?;
    let mut best = (curve[0].gamma, curve[0].harmonic_mean());
    for p in &curve[1..] {
        let h = p.harmonic_mean();
        if h > best.1 {
            best = (p.gamma, h);
        }
    }
    Ok(best)
}

/// `γ` maximizing the mean harmonic mean over several scored sets, and
/// that mean.
///
/// Each set's harmonic mean is piecewise constant between its own
/// breakpoints, so the mean is constant between consecutive breakpoints of
/// the union; one candidate per such interval makes the search exact. With a
/// single set this equals [`select_gamma`].
pub fn select_gamma_pooled(sets: &[(&ScoreMatrix, &[usize])], kind: AccuracyKind) -> Result<(f64, f64)> {
    if sets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut plateaus = Vec::with_capacity(sets.len());
    let mut union = Vec::new();
    for (scores, truth) in sets {
        let bps = gamma_breakpoints(scores)?;
        let h: Vec<f64> = tradeoff_curve(scores, truth, kind)?
            .iter()
            .map(TradeoffPoint::harmonic_mean)
            .collect();
        debug_assert_eq!(h.len(), bps.len() + 1);
        union.extend_from_slice(&bps);
        plateaus.push((bps, h));
    }
    union.sort_by(f64::total_cmp);
    union.dedup();
    let (lo, hi) = (union[0], union[union.len() - 1]);
    let pad = outer_offset(lo, hi);
    let candidates = std::iter::once(lo - pad)
        .chain(union.windows(2).map(|w| 0.5 * (w[0] + w[1])))
        .chain(std::iter::once(hi + pad));

    let mean_h = |gamma: f64| {
        plateaus
            .iter()
            .map(|(bps, h)| h[bps.partition_point(|&b| b < gamma)])
            .sum::<f64>()
            / sets.len() as f64
    };
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for gamma in candidates {
        let h = mean_h(gamma);
        if h > best.1 {
            best = (gamma, h);
        }
    }
    Ok(best)
}

/// Area under the seen-unseen accuracy curve, accuracies in `[0, 1]`.
pub fn ausuc_from_curve(curve: &[TradeoffPoint]) -> f64 {
    let area: f64 = curve
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let dx = (b.acc_unseen_in_all - a.acc_unseen_in_all) / 100.0;
            dx * (a.acc_seen_in_all + b.acc_seen_in_all) / 200.0
        })
        .sum();
    area.clamp(0.0, 1.0)
}

/// Area under the curve of `A_{S→C}` against `A_{U→C}` as `γ` sweeps the real line.
pub fn ausuc(scores: &ScoreMatrix, truth: &[usize], kind: AccuracyKind) -> Result<f64> {
    Ok(ausuc_from_curve(&tradeoff_curve(scores, truth, kind)?))
}
