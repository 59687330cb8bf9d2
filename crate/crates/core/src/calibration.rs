//! Per-label calibration of the decision rule.
//!
//! * Thresholding: choose an additive shift Δ per label from validation
//!   decision values (midpoint sweep), average it over folds, and fall back to
//!   "threshold at the largest validation score" on folds whose best F1 is
//!   below a floor `fbr`. The floor itself is picked by an outer CV whose
//!   thresholds come from an inner CV on each outer training part.
//! * Cost-sensitive: choose `(C, t)` per label by pooled CV-F1 of the sign
//!   rule, where positives weigh `C(2 − t)` and negatives `C·t`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{make_folds, FoldPlan, SparseDataset};
use crate::error::{Error, Result};
use crate::metrics::f1_score;
use crate::rng::mix_seed;
use crate::solver::{train_binary, BinaryModel};
use crate::trainer::{
    check_trainable, out_of_fold_decisions, sign_rule_f1, CGrid, Calibrated, OvRModel, OvrOptions, Provenance,
    StrategyTag, FALLBACK_C,
};

/// Best cut of one validation fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldSweep {
    pub delta: f64,
    pub best_f1: f64,
    pub max_value: f64,
}

impl FoldSweep {
    pub fn from_values(values: &[(f64, bool)]) -> Option<FoldSweep> {
        if values.is_empty() {
            return None;
        }
        let (delta, best_f1) = sweep_threshold(values);
        let max_value = values.iter().map(|&(v, _)| v).fold(f64::NEG_INFINITY, f64::max);
        Some(FoldSweep {
            delta,
            best_f1,
            max_value,
        })
    }

    /// The fold's shift under floor `fbr`: its own sweep result, or
    /// `−max_value` when the sweep's F1 falls below the floor.
    pub fn delta_under(&self, fbr: f64) -> f64 {
        if self.best_f1 < fbr {
            -self.max_value
        } else {
            self.delta
        }
    }
}

/// Chooses Δ so that "positive iff value + Δ ≥ 0" maximizes F1 on `values`.
///
/// Candidate thresholds are one unit below the smallest value, every midpoint
/// between adjacent distinct values, and one unit above the largest value.
/// Among equally good thresholds the largest (fewest positives) wins, so a
/// list without positives yields a threshold above the maximum and F1 = 0.
/// Values must be finite.
pub fn sweep_threshold(values: &[(f64, bool)]) -> (f64, f64) {
    debug_assert!(values.iter().all(|(v, _)| v.is_finite()));
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted: Vec<(f64, bool)> = values.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // distinct values with (positives, negatives) counts, ascending
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &(v, pos) in &sorted {
        match groups.last_mut() {
            Some(g) if g.0 == v => {
                if pos {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((v, usize::from(pos), usize::from(!pos))),
        }
    }
    let total_pos: usize = groups.iter().map(|g| g.1).sum();

    // start above the maximum (nothing predicted) and lower the threshold
    let top = groups[groups.len() - 1].0;
    let mut best_threshold = top + 1.0;
    let mut best_f1 = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    for idx in (0..groups.len()).rev() {
        tp += groups[idx].1;
        fp += groups[idx].2;
        let threshold = if idx == 0 {
            groups[0].0 - 1.0
        } else {
            0.5 * (groups[idx - 1].0 + groups[idx].0)
        };
        let f1 = f1_score(tp, fp, total_pos - tp);
        if f1 > best_f1 {
            best_f1 = f1;
            best_threshold = threshold;
        }
    }
    (-best_threshold, best_f1)
}

/// Thresholding outcome for one label.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub label_index: usize,
    /// Mean of `per_fold_deltas` (0 when no fold produced a sweep).
    pub delta: f64,
    pub per_fold_deltas: Vec<f64>,
    pub fbr_used: f64,
}

fn average_delta(sweeps: &[FoldSweep], fbr: f64) -> (f64, Vec<f64>) {
    let deltas: Vec<f64> = sweeps.iter().map(|s| s.delta_under(fbr)).collect();
    let mean = if deltas.is_empty() {
        0.0
    } else {
        deltas.iter().sum::<f64>() / deltas.len() as f64
    };
    (mean, deltas)
}

/// Per-label audit line of any calibrating trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCalibration {
    pub label: usize,
    pub c: f64,
    pub t: f64,
    pub fbr: Option<f64>,
    pub delta: f64,
    /// Pooled CV F1 of the selected setting.
    pub cv_f1: f64,
    pub fold_deltas: Vec<f64>,
    pub fold_f1: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationReport {
    pub labels: Vec<LabelCalibration>,
}

impl CalibrationReport {
    pub fn to_text(&self, strategy: StrategyTag) -> String {
        let list = |v: &[f64]| {
            if v.is_empty() {
                "-".to_string()
            } else {
                v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
            }
        };
        let mut s = format!("# calibration-report v1 strategy={strategy}\n");
        for l in &self.labels {
            let _ = writeln!(
                s,
                "label {} C {} t {} fbr {} delta {} cv_f1 {} fold_deltas {} fold_f1 {}",
                l.label,
                l.c,
                l.t,
                l.fbr.map_or("-".to_string(), |f| f.to_string()),
                l.delta,
                l.cv_f1,
                list(&l.fold_deltas),
                list(&l.fold_f1)
            );
        }
        s
    }
}

pub const DEFAULT_FBR: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_INNER_FOLDS: usize = 3;

fn fit(train: &SparseDataset, rows: Vec<usize>, label: usize, c: f64, opts: &OvrOptions) -> Result<BinaryModel> {
    train_binary(&opts.problem(train, rows, label), c, 1.0, &opts.solver, None)
}

/// Fits one model per fold of `folds` (over the rows `members` of `train`)
/// and sweeps each fold's validation scores. Folds whose model is
/// always-negative produce no sweep.
fn fold_sweeps(
    train: &SparseDataset,
    members: &[usize],
    folds: &FoldPlan,
    label: usize,
    c: f64,
    opts: &OvrOptions,
) -> Result<Vec<FoldSweep>> {
    let mut sweeps = Vec::with_capacity(folds.k);
    for fold in 0..folds.k {
        let rows = folds.training(fold).into_iter().map(|p| members[p]).collect();
        let model = fit(train, rows, label, c, opts)?;
        if model.always_negative {
            continue;
        }
        let values: Vec<(f64, bool)> = folds
            .validation(fold)
            .into_iter()
            .map(|p| {
                let i = members[p];
                (model.score(train.row(i)), train.has_label(i, label))
            })
            .collect();
        sweeps.extend(FoldSweep::from_values(&values));
    }
    Ok(sweeps)
}

struct OuterFold {
    /// Inner-CV sweeps on this outer fold's training part.
    inner: Vec<FoldSweep>,
    /// Outer validation scores of the model fit on the outer training part.
    validation: Vec<(f64, bool)>,
    always_negative: bool,
}

fn threshold_label(
    train: &SparseDataset,
    label: usize,
    c: f64,
    fbr_candidates: &[f64],
    outer: &FoldPlan,
    inner_k: usize,
    opts: &OvrOptions,
) -> Result<(BinaryModel, ThresholdResult, f64, Vec<f64>)> {
    let all: Vec<usize> = (0..train.n_instances()).collect();
    let mut model = fit(train, all.clone(), label, c, opts)?;
    if model.always_negative {
        let result = ThresholdResult {
            label_index: label,
            delta: 0.0,
            per_fold_deltas: Vec::new(),
            fbr_used: fbr_candidates[0],
        };
        return Ok((model, result, 0.0, Vec::new()));
    }

    let mut outer_folds = Vec::with_capacity(outer.k);
    for o in 0..outer.k {
        let members = outer.training(o);
        let inner = make_folds(members.len(), inner_k, mix_seed(outer.seed, o as u64 + 1))?;
        let inner_sweeps = fold_sweeps(train, &members, &inner, label, c, opts)?;
        let outer_model = fit(train, members, label, c, opts)?;
        let validation = outer
            .validation(o)
            .into_iter()
            .map(|i| (outer_model.score(train.row(i)), train.has_label(i, label)))
            .collect();
        outer_folds.push(OuterFold {
            inner: inner_sweeps,
            validation,
            always_negative: outer_model.always_negative,
        });
    }

    // outer level: pooled F1 of inner-derived thresholds, per fbr
    let mut best: Option<(f64, f64)> = None;
    for &fbr in fbr_candidates {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for of in &outer_folds {
            let (delta, _) = average_delta(&of.inner, fbr);
            for &(v, positive) in &of.validation {
                let predicted = !of.always_negative && v + delta >= 0.0;
                match (predicted, positive) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
        let f1 = f1_score(tp, fp, fn_);
        match best {
            Some((bf, bf1)) if f1 < bf1 || (f1 == bf1 && fbr >= bf) => {}
            _ => best = Some((fbr, f1)),
        }
    }
    let (fbr, cv_f1) = best.unwrap_or((fbr_candidates[0], 0.0));

    // final shift: outer-fold sweeps under the chosen floor
    let outer_sweeps: Vec<FoldSweep> = outer_folds
        .iter()
        .filter(|of| !of.always_negative)
        .filter_map(|of| FoldSweep::from_values(&of.validation))
        .collect();
    let (delta, per_fold_deltas) = average_delta(&outer_sweeps, fbr);
    model.delta = delta;
    let fold_f1 = outer_sweeps.iter().map(|s| s.best_f1).collect();
    Ok((
        model,
        ThresholdResult {
            label_index: label,
            delta,
            per_fold_deltas,
            fbr_used: fbr,
        },
        cv_f1,
        fold_f1,
    ))
}

/// Two-level CV thresholding at fixed C.
pub fn calibrate_thresholding(
    train: &SparseDataset,
    c: f64,
    fbr_candidates: &[f64],
    outer_folds: &FoldPlan,
    inner_folds_k: usize,
    opts: &OvrOptions,
) -> Result<Calibrated> {
    check_trainable(train)?;
    if fbr_candidates.is_empty() || fbr_candidates.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid(
            "fbr candidates must be a nonempty list of values in [0, 1]",
        ));
    }
    if outer_folds.train_size() != train.n_instances() {
        return Err(Error::DimensionMismatch(
            "outer fold plan does not cover the training set".into(),
        ));
    }
    let per_label = (0..train.n_labels())
        .into_par_iter()
        .map(|label| {
            let (model, result, cv_f1, fold_f1) =
                threshold_label(train, label, c, fbr_candidates, outer_folds, inner_folds_k, opts)?;
            let line = LabelCalibration {
                label,
                c,
                t: 1.0,
                fbr: Some(result.fbr_used),
                delta: result.delta,
                cv_f1,
                fold_deltas: result.per_fold_deltas,
                fold_f1,
            };
            Ok((model, line))
        })
        .collect::<Result<Vec<_>>>()?;
    let (models, labels): (Vec<_>, Vec<_>) = per_label.into_iter().unzip();
    let fbr_desc = fbr_candidates.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    Ok(Calibrated {
        model: OvRModel {
            n_features: train.n_features(),
            models,
            strategy: StrategyTag::Thresholding,
            provenance: Provenance {
                seed: Some(outer_folds.seed),
                fold_digest: Some(outer_folds.digest()),
                grid: format!("C={c} fbr in {{{fbr_desc}}} inner_k={inner_folds_k}"),
            },
        },
        report: CalibrationReport { labels },
    })
}

/// Which CV splits the `(C, t)` pairs are scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldPolicy {
    /// Every pair uses the given fold plan.
    SharedFolds,
    /// Pairs sharing a `t` share folds (warm-started along C); each `t` gets
    /// its own seeded refold.
    RefoldPerT,
    /// Every pair gets its own seeded refold.
    RefoldPerPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostGridKind {
    Dense,
    Simple,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid {
    pub pairs: Vec<(f64, f64)>,
    pub fold_policy: FoldPolicy,
    pub kind: CostGridKind,
}

impl CostGrid {
    pub fn custom(pairs: Vec<(f64, f64)>, fold_policy: FoldPolicy) -> Result<Self> {
        let grid = CostGrid {
            pairs,
            fold_policy,
            kind: CostGridKind::Custom,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::invalid("cost grid is empty"));
        }
        for &(c, t) in &self.pairs {
            if !(c > 0.0 && c.is_finite()) || !(t > 0.0 && t <= 1.0) {
                return Err(Error::invalid(format!("invalid (C, t) pair ({c}, {t})")));
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let kind = match self.kind {
            CostGridKind::Dense => "dense",
            CostGridKind::Simple => "simple",
            CostGridKind::Custom => "custom",
        };
        let policy = match self.fold_policy {
            FoldPolicy::SharedFolds => "shared-folds",
            FoldPolicy::RefoldPerT => "refold-per-t",
            FoldPolicy::RefoldPerPair => "refold-per-pair",
        };
        let pairs = self
            .pairs
            .iter()
            .map(|(c, t)| format!("({c},{t})"))
            .collect::<Vec<_>>()
            .join(",");
        format!("{kind} {policy} {} pairs {pairs}", self.pairs.len())
    }

    /// The dense grid built on a caller-chosen C grid.
    pub fn dense_with(c_grid: &CGrid) -> CostGrid {
        let pairs = (1..=10)
            .flat_map(|i| {
                let t = i as f64 / 10.0;
                c_grid.values().iter().map(move |&c| (c, t))
            })
            .collect();
        CostGrid {
            pairs,
            fold_policy: FoldPolicy::RefoldPerT,
            kind: CostGridKind::Dense,
        }
    }

    pub fn strategy_tag(&self) -> StrategyTag {
        match self.kind {
            CostGridKind::Simple => StrategyTag::CostSensitiveSimple,
            _ => StrategyTag::CostSensitive,
        }
    }
}

/// Dense: `t ∈ {0.1, …, 1.0}` × the default C grid, refolded per `t`.
/// Simple: `t ∈ {1/7, …, 1}`, `C ∈ {0.01/t, 0.1/t, 1/t, 10/t, 100/t}`, shared folds.
pub fn build_cost_grid(kind: CostGridKind) -> Result<CostGrid> {
    let pairs = match kind {
        CostGridKind::Dense => return Ok(CostGrid::dense_with(&CGrid::default())),
        CostGridKind::Simple => (1..=7)
            .flat_map(|i| {
                let t = i as f64 / 7.0;
                [0.01, 0.1, 1.0, 10.0, 100.0].map(|base| (base / t, t))
            })
            .collect(),
        CostGridKind::Custom => return Err(Error::invalid("custom grids are built with CostGrid::custom")),
    };
    let fold_policy = match kind {
        CostGridKind::Dense => FoldPolicy::RefoldPerT,
        _ => FoldPolicy::SharedFolds,
    };
    Ok(CostGrid {
        pairs,
        fold_policy,
        kind,
    })
}

/// Pooled sign-rule CV-F1 of every pair, in grid order.
pub fn cv_f1_for_pairs(
    train: &SparseDataset,
    label: usize,
    grid: &CostGrid,
    folds: &FoldPlan,
    opts: &OvrOptions,
) -> Result<Vec<f64>> {
    let mut scores = vec![0.0; grid.pairs.len()];
    if train.label_frequency(label) == 0 {
        return Ok(scores);
    }
    // group pair indices that share folds; BTreeMap keeps group order stable
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut t_ids: Vec<u64> = Vec::new();
    for (idx, &(_, t)) in grid.pairs.iter().enumerate() {
        let key = match grid.fold_policy {
            FoldPolicy::SharedFolds => t.to_bits(),
            FoldPolicy::RefoldPerT => t.to_bits(),
            FoldPolicy::RefoldPerPair => idx as u64,
        };
        if !t_ids.contains(&key) {
            t_ids.push(key);
        }
        groups.entry(key).or_default().push(idx);
    }
    for (group_no, key) in t_ids.iter().enumerate() {
        let mut members = groups[key].clone();
        members.sort_by(|&a, &b| grid.pairs[a].0.total_cmp(&grid.pairs[b].0));
        let plan = match grid.fold_policy {
            FoldPolicy::SharedFolds => folds.clone(),
            _ => make_folds(train.n_instances(), folds.k, mix_seed(folds.seed, group_no as u64 + 1))?,
        };
        let path: Vec<(f64, f64)> = members.iter().map(|&i| grid.pairs[i]).collect();
        let decisions = out_of_fold_decisions(train, label, &plan, &path, true, opts)?;
        for (&idx, d) in members.iter().zip(&decisions) {
            scores[idx] = sign_rule_f1(train, label, d);
        }
    }
    Ok(scores)
}

/// Highest CV-F1; ties prefer larger `t`, then smaller C; an all-zero
/// curve falls back to `(1, 1)`.
pub fn select_pair(pairs: &[(f64, f64)], scores: &[f64]) -> ((f64, f64), f64) {
    let mut best: Option<usize> = None;
    for i in 0..pairs.len() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let better = scores[i] > scores[b]
                    || (scores[i] == scores[b]
                        && (pairs[i].1 > pairs[b].1 || (pairs[i].1 == pairs[b].1 && pairs[i].0 < pairs[b].0)));
                Some(if better { i } else { b })
            }
        };
    }
    match best {
        Some(b) if scores[b] > 0.0 => (pairs[b], scores[b]),
        _ => ((FALLBACK_C, 1.0), 0.0),
    }
}

/// Per label: select `(C, t)` by pooled CV-F1, refit on all training data.
pub fn calibrate_cost_sensitive(
    train: &SparseDataset,
    grid: &CostGrid,
    folds: &FoldPlan,
    opts: &OvrOptions,
) -> Result<Calibrated> {
    check_trainable(train)?;
    grid.validate()?;
    if folds.train_size() != train.n_instances() {
        return Err(Error::DimensionMismatch(
            "fold plan does not cover the training set".into(),
        ));
    }
    let per_label = (0..train.n_labels())
        .into_par_iter()
        .map(|label| {
            let scores = cv_f1_for_pairs(train, label, grid, folds, opts)?;
            let ((c, t), cv_f1) = select_pair(&grid.pairs, &scores);
            let problem = opts.problem(train, (0..train.n_instances()).collect(), label);
            let model = train_binary(&problem, c, t, &opts.solver, None)?;
            let line = LabelCalibration {
                label,
                c,
                t,
                fbr: None,
                delta: 0.0,
                cv_f1,
                fold_deltas: Vec::new(),
                fold_f1: Vec::new(),
            };
            Ok((model, line))
        })
        .collect::<Result<Vec<_>>>()?;
    let (models, labels): (Vec<_>, Vec<_>) = per_label.into_iter().unzip();
    Ok(Calibrated {
        model: OvRModel {
            n_features: train.n_features(),
            models,
            strategy: grid.strategy_tag(),
            provenance: Provenance {
                seed: Some(folds.seed),
                fold_digest: Some(folds.digest()),
                grid: grid.describe(),
            },
        },
        report: CalibrationReport { labels },
    })
}
