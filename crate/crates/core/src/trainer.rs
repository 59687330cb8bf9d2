//! One-vs-rest training: one binary model per label, optionally with the
//! regularization parameter chosen per label by cross-validated F1.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::calibration::{CalibrationReport, LabelCalibration};
use crate::data::{FoldPlan, SparseDataset};
use crate::error::{Error, Result};
use crate::metrics::f1_score;
use crate::solver::{train_binary, BinaryModel, BinaryProblem, SolverOptions, TrainDiagnostics};

/// How an [`OvRModel`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyTag {
    Basic,
    BasicC,
    Thresholding,
    CostSensitive,
    CostSensitiveSimple,
}

impl StrategyTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyTag::Basic => "basic",
            StrategyTag::BasicC => "basic-C",
            StrategyTag::Thresholding => "thresholding",
            StrategyTag::CostSensitive => "cost-sensitive",
            StrategyTag::CostSensitiveSimple => "cost-sensitive-simple",
        }
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "basic" => StrategyTag::Basic,
            "basic-C" => StrategyTag::BasicC,
            "thresholding" => StrategyTag::Thresholding,
            "cost-sensitive" => StrategyTag::CostSensitive,
            "cost-sensitive-simple" => StrategyTag::CostSensitiveSimple,
            other => return Err(Error::invalid(format!("unknown strategy tag {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub fold_digest: Option<String>,
    pub grid: String,
}

/// One binary model per label, in label order.
#[derive(Debug, Clone, PartialEq)]
pub struct OvRModel {
    pub n_features: usize,
    pub models: Vec<BinaryModel>,
    pub strategy: StrategyTag,
    pub provenance: Provenance,
}

impl OvRModel {
    pub fn n_labels(&self) -> usize {
        self.models.len()
    }
}

/// Settings shared by every binary fit inside one-vs-rest training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvrOptions {
    pub solver: SolverOptions,
    pub fit_bias: bool,
}

impl Default for OvrOptions {
    fn default() -> Self {
        OvrOptions {
            solver: SolverOptions::default(),
            fit_bias: true,
        }
    }
}

impl OvrOptions {
    pub(crate) fn problem<'a>(&self, data: &'a SparseDataset, rows: Vec<usize>, label: usize) -> BinaryProblem<'a> {
        let p = BinaryProblem::with_rows(data, rows, label);
        if self.fit_bias {
            p
        } else {
            p.without_bias()
        }
    }
}

/// Strictly increasing list of positive regularization values.
#[derive(Debug, Clone, PartialEq)]
pub struct CGrid {
    values: Vec<f64>,
}

impl CGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("C grid is empty"));
        }
        if values.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("C grid values must be positive and finite"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("C grid must be strictly increasing"));
        }
        Ok(CGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn describe(&self) -> String {
        self.values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
    }
}

impl Default for CGrid {
    /// 2^−10, 2^−9, …, 2^10.
    fn default() -> Self {
        CGrid {
            values: (-10..=10).map(|e| 2f64.powi(e)).collect(),
        }
    }
}

/// Decision values of every training position under every `(C, t)` of
/// `path`, each produced by the fold model that did not see that position.
///
/// Within a fold the path is solved in order, and with `warm_start` each fit
/// starts from the previous solution. Result is indexed `[path point][position]`.
pub fn out_of_fold_decisions(
    train: &SparseDataset,
    label: usize,
    folds: &FoldPlan,
    path: &[(f64, f64)],
    warm_start: bool,
    opts: &OvrOptions,
) -> Result<Vec<Vec<f64>>> {
    if folds.train_size() != train.n_instances() {
        return Err(Error::DimensionMismatch(format!(
            "fold plan covers {} instances, training set has {}",
            folds.train_size(),
            train.n_instances()
        )));
    }
    let mut out = vec![vec![0.0; train.n_instances()]; path.len()];
    for fold in 0..folds.k {
        let problem = opts.problem(train, folds.training(fold), label);
        let held_out = folds.validation(fold);
        let mut previous: Option<BinaryModel> = None;
        for (point, &(c, t)) in path.iter().enumerate() {
            let init = if warm_start { previous.as_ref() } else { None };
            let model = train_binary(&problem, c, t, &opts.solver, init)?;
            for &p in &held_out {
                out[point][p] = model.score(train.row(p));
            }
            previous = Some(model);
        }
    }
    Ok(out)
}

/// F1 of the sign rule (`value ≥ 0` predicts positive) against the label.
pub(crate) fn sign_rule_f1(train: &SparseDataset, label: usize, decisions: &[f64]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (i, &d) in decisions.iter().enumerate() {
        match (d >= 0.0, train.has_label(i, label)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    f1_score(tp, fp, fn_)
}

/// Pooled out-of-fold F1 for each C of the grid (t = 1, Δ = 0), warm-starting
/// along the grid inside every fold.
pub fn cv_f1_for_c(
    train: &SparseDataset,
    label: usize,
    grid: &CGrid,
    folds: &FoldPlan,
    opts: &OvrOptions,
) -> Result<Vec<(f64, f64)>> {
    if train.label_frequency(label) == 0 {
        return Ok(grid.values().iter().map(|&c| (c, 0.0)).collect());
    }
    let path: Vec<(f64, f64)> = grid.values().iter().map(|&c| (c, 1.0)).collect();
    let decisions = out_of_fold_decisions(train, label, folds, &path, true, opts)?;
    Ok(grid
        .values()
        .iter()
        .zip(&decisions)
        .map(|(&c, d)| (c, sign_rule_f1(train, label, d)))
        .collect())
}

/// C used when every grid value scores CV-F1 = 0.
pub const FALLBACK_C: f64 = 1.0;

/// Highest CV-F1; ties go to the smallest C; an all-zero curve falls back to
/// [`FALLBACK_C`].
pub fn select_c(scores: &[(f64, f64)]) -> (f64, f64) {
    let mut best: Option<(f64, f64)> = None;
    for &(c, f1) in scores {
        match best {
            Some((bc, bf)) if f1 < bf || (f1 == bf && c >= bc) => {}
            _ => best = Some((c, f1)),
        }
    }
    match best {
        Some((c, f1)) if f1 > 0.0 => (c, f1),
        _ => (FALLBACK_C, 0.0),
    }
}

fn fit_all(train: &SparseDataset, label: usize, c: f64, t: f64, opts: &OvrOptions) -> Result<BinaryModel> {
    let problem = opts.problem(train, (0..train.n_instances()).collect(), label);
    train_binary(&problem, c, t, &opts.solver, None)
}

pub(crate) fn check_trainable(train: &SparseDataset) -> Result<()> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set has no instances".into()));
    }
    Ok(())
}

/// Every label trained at the same C with t = 1 and Δ = 0.
pub fn train_ovr_basic(train: &SparseDataset, c: f64, opts: &OvrOptions) -> Result<OvRModel> {
    check_trainable(train)?;
    let models = (0..train.n_labels())
        .into_par_iter()
        .map(|label| fit_all(train, label, c, 1.0, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(OvRModel {
        n_features: train.n_features(),
        models,
        strategy: StrategyTag::Basic,
        provenance: Provenance {
            seed: None,
            fold_digest: None,
            grid: format!("C={c}"),
        },
    })
}

/// Output of a training procedure that selects parameters per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub model: OvRModel,
    pub report: CalibrationReport,
}

/// Per label: CV-F1 over `grid` on the shared folds, pick C with
/// [`select_c`], refit on the full training set.
pub fn train_ovr_basic_c(
    train: &SparseDataset,
    grid: &CGrid,
    folds: &FoldPlan,
    opts: &OvrOptions,
) -> Result<Calibrated> {
    check_trainable(train)?;
    let per_label = (0..train.n_labels())
        .into_par_iter()
        .map(|label| {
            let scores = cv_f1_for_c(train, label, grid, folds, opts)?;
            let (c, cv_f1) = select_c(&scores);
            let model = fit_all(train, label, c, 1.0, opts)?;
            let line = LabelCalibration {
                label,
                c,
                t: 1.0,
                fbr: None,
                delta: 0.0,
                cv_f1,
                fold_deltas: Vec::new(),
                fold_f1: Vec::new(),
            };
            Ok((model, line))
        })
        .collect::<Result<Vec<_>>>()?;
    let (models, lines): (Vec<_>, Vec<_>) = per_label.into_iter().unzip();
    Ok(Calibrated {
        model: OvRModel {
            n_features: train.n_features(),
            models,
            strategy: StrategyTag::BasicC,
            provenance: Provenance {
                seed: Some(folds.seed),
                fold_digest: Some(folds.digest()),
                grid: format!("C in {{{}}}", grid.describe()),
            },
        },
        report: CalibrationReport { labels: lines },
    })
}

const MODEL_MAGIC: &str = "ovrlab-model";
const MODEL_VERSION: u32 = 1;

impl OvRModel {
    /// Versioned text form; [`OvRModel::from_text`] restores it exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.provenance;
        let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(s, "n_features {}", self.n_features);
        let _ = writeln!(s, "n_labels {}", self.n_labels());
        let _ = writeln!(s, "strategy {}", self.strategy);
        let _ = writeln!(s, "seed {}", p.seed.map_or("-".to_string(), |v| v.to_string()));
        let _ = writeln!(s, "fold_digest {}", p.fold_digest.as_deref().unwrap_or("-"));
        let _ = writeln!(s, "grid {}", p.grid);
        for (label, m) in self.models.iter().enumerate() {
            let _ = write!(
                s,
                "label {label} C {} t {} delta {} always_negative {} bias {} iterations {} grad_norm {} weights",
                m.c,
                m.t,
                m.delta,
                u8::from(m.always_negative),
                m.bias,
                m.diagnostics.iterations,
                m.diagnostics.grad_norm
            );
            for (j, w) in m.weights.iter().enumerate().filter(|(_, w)| **w != 0.0) {
                let _ = write!(s, " {j}:{w}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<OvRModel> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut header = |key: &str| -> Result<String> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("missing {key} line")))?;
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            if k != key {
                return Err(Error::parse(n, format!("expected {key:?}, found {k:?}")));
            }
            Ok(v.to_string())
        };
        let version = header(MODEL_MAGIC)?;
        if version.trim() != MODEL_VERSION.to_string() {
            return Err(Error::parse(1, format!("unsupported model version {version:?}")));
        }
        let num = |v: String, line: usize| -> Result<usize> {
            v.trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("bad count {v:?}")))
        };
        let n_features = num(header("n_features")?, 2)?;
        let n_labels = num(header("n_labels")?, 3)?;
        let strategy: StrategyTag = header("strategy")?.trim().parse()?;
        let seed = match header("seed")?.trim() {
            "-" => None,
            v => Some(v.parse().map_err(|_| Error::parse(5, "bad seed"))?),
        };
        let fold_digest = match header("fold_digest")?.trim() {
            "-" => None,
            v => Some(v.to_string()),
        };
        let grid = header("grid")?;

        let mut models = Vec::with_capacity(n_labels);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let model = parse_model_line(line, lineno, n_features, models.len())?;
            models.push(model);
        }
        if models.len() != n_labels {
            return Err(Error::parse(
                0,
                format!("header declares {n_labels} labels, found {}", models.len()),
            ));
        }
        Ok(OvRModel {
            n_features,
            models,
            strategy,
            provenance: Provenance {
                seed,
                fold_digest,
                grid,
            },
        })
    }
}

fn parse_model_line(line: &str, lineno: usize, n_features: usize, expected: usize) -> Result<BinaryModel> {
    let err = |msg: String| Error::parse(lineno, msg);
    let mut tokens = line.split_whitespace();
    let mut field = |key: &str| -> Result<&str> {
        match (tokens.next(), tokens.next()) {
            (Some(k), Some(v)) if k == key => Ok(v),
            _ => Err(Error::parse(lineno, format!("expected field {key:?}"))),
        }
    };
    let real = |v: &str| -> Result<f64> { v.parse().map_err(|_| Error::parse(lineno, format!("bad number {v:?}"))) };

    let label: usize = field("label")?.parse().map_err(|_| err("bad label index".into()))?;
    if label != expected {
        return Err(err(format!("expected label {expected}, found {label}")));
    }
    let c = real(field("C")?)?;
    let t = real(field("t")?)?;
    let delta = real(field("delta")?)?;
    let always_negative = match field("always_negative")? {
        "0" => false,
        "1" => true,
        other => return Err(err(format!("bad always_negative flag {other:?}"))),
    };
    let bias = real(field("bias")?)?;
    let iterations = field("iterations")?
        .parse()
        .map_err(|_| err("bad iteration count".into()))?;
    let grad_norm = real(field("grad_norm")?)?;
    if tokens.next() != Some("weights") {
        return Err(err("expected weights".into()));
    }
    let mut weights = vec![0.0; n_features];
    for tok in tokens {
        let (j, v) = tok.split_once(':').ok_or_else(|| err(format!("bad weight {tok:?}")))?;
        let j: usize = j.parse().map_err(|_| err(format!("bad weight index {j:?}")))?;
        if j >= n_features {
            return Err(err(format!("weight index {j} outside {n_features} features")));
        }
        weights[j] = real(v)?;
    }
    Ok(BinaryModel {
        weights,
        bias,
        delta,
        c,
        t,
        always_negative,
        diagnostics: TrainDiagnostics { iterations, grad_norm },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_folds;

    fn toy() -> SparseDataset {
        // label 0 follows feature 0, label 1 follows feature 1, label 2 never occurs
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let a = (i % 3) as f64 - 1.0;
            let b = ((i / 3) % 3) as f64 - 1.0;
            rows.push(vec![(0, a + 0.1 * (i as f64 / 30.0)), (1, b)]);
            let mut set = Vec::new();
            if a > 0.0 {
                set.push(0);
            }
            if b > 0.0 {
                set.push(1);
            }
            labels.push(set);
        }
        SparseDataset::from_rows(rows, labels, None, Some(3)).unwrap()
    }

    #[test]
    fn default_grid() {
        let g = CGrid::default();
        assert_eq!(g.values().len(), 21);
        assert_eq!(g.values()[0], 2f64.powi(-10));
        assert!(g.values().contains(&1.0));
        assert!(CGrid::new(vec![]).is_err());
        assert!(CGrid::new(vec![1.0, 1.0]).is_err());
        assert!(CGrid::new(vec![-1.0]).is_err());
    }

    #[test]
    fn basic_matches_per_label_solver() {
        let ds = toy();
        let opts = OvrOptions::default();
        let model = train_ovr_basic(&ds, 1.0, &opts).unwrap();
        assert_eq!(model.n_labels(), 3);
        assert!(model.models[2].always_negative);
        for label in 0..2 {
            let direct = train_binary(&BinaryProblem::new(&ds, label), 1.0, 1.0, &opts.solver, None).unwrap();
            for i in 0..ds.n_instances() {
                assert_eq!(model.models[label].score(ds.row(i)), direct.score(ds.row(i)));
            }
        }
    }

    #[test]
    fn selection_rules() {
        assert_eq!(select_c(&[(0.5, 0.0), (1.0, 0.0), (2.0, 0.0)]), (1.0, 0.0));
        assert_eq!(select_c(&[(0.5, 0.2), (1.0, 0.7), (2.0, 0.7)]), (1.0, 0.7));
        assert_eq!(select_c(&[(4.0, 0.9), (0.25, 0.9)]), (0.25, 0.9));
    }

    #[test]
    fn all_negative_label_scores_zero() {
        let ds = toy();
        let folds = make_folds(ds.n_instances(), 5, 0).unwrap();
        let scores = cv_f1_for_c(&ds, 2, &CGrid::default(), &folds, &OvrOptions::default()).unwrap();
        assert_eq!(scores.len(), 21);
        assert!(scores.iter().all(|&(_, f)| f == 0.0));
    }

    #[test]
    fn model_file_round_trip() {
        let ds = toy();
        let folds = make_folds(ds.n_instances(), 3, 4).unwrap();
        let grid = CGrid::new(vec![0.5, 1.0, 4.0]).unwrap();
        let trained = train_ovr_basic_c(&ds, &grid, &folds, &OvrOptions::default()).unwrap();
        let text = trained.model.to_text();
        assert_eq!(OvRModel::from_text(&text).unwrap(), trained.model);
        assert!(OvRModel::from_text(&text.replace("ovrlab-model 1", "ovrlab-model 9")).is_err());
        let truncated: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        assert!(OvRModel::from_text(&truncated).is_err());
    }
}
