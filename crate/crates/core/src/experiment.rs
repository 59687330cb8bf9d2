//! Repeated-split benchmark runner.
//!
//! For every seed one train/test split is drawn and reused for every feature
//! file ("representation"), so columns of the results table are comparable.
//! Methods that share a trained model (for example `one-vs-rest-basic` and
//! `one-vs-rest-no-empty`) train it once per (representation, seed).
//!
//! The results JSON contains no timings or paths, so identical configurations
//! produce byte-identical output. Phase timings go to the log.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    build_cost_grid, calibrate_cost_sensitive, calibrate_thresholding, CalibrationReport, CostGrid, CostGridKind,
    LabelCalibration, DEFAULT_FBR, DEFAULT_INNER_FOLDS,
};
use crate::data::{
    make_folds, make_split, parse_dataset, DataSource, FoldPlan, ParseOptions, SparseDataset, SplitPlan,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport, ResultsTable};
use crate::predict::{
    decision_matrix, predict_basic, predict_no_empty, predict_unrealistic, PredictionSet, PredictionStrategy,
};
use crate::rng::mix_seed;
use crate::solver::SolverOptions;
use crate::trainer::{train_ovr_basic, train_ovr_basic_c, CGrid, Calibrated, OvrOptions, StrategyTag};

/// Salt separating the CV fold seed from the split seed.
const FOLD_SALT: u64 = 0xF01D;

/// A training plus prediction method as listed in the results tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "unrealistic")]
    Unrealistic,
    #[serde(rename = "one-vs-rest-basic")]
    Basic,
    #[serde(rename = "one-vs-rest-basic-C")]
    BasicC,
    #[serde(rename = "one-vs-rest-no-empty")]
    NoEmpty,
    #[serde(rename = "thresholding")]
    Thresholding,
    #[serde(rename = "cost-sensitive")]
    CostSensitive,
    #[serde(rename = "cost-sensitive-no-empty")]
    CostSensitiveNoEmpty,
    #[serde(rename = "cost-sensitive-simple")]
    CostSensitiveSimple,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Unrealistic,
        Method::Basic,
        Method::BasicC,
        Method::NoEmpty,
        Method::Thresholding,
        Method::CostSensitive,
        Method::CostSensitiveNoEmpty,
        Method::CostSensitiveSimple,
    ];

    /// Every method that does not read test labels.
    pub fn realistic() -> Vec<Method> {
        Method::ALL.into_iter().filter(|m| *m != Method::Unrealistic).collect()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Unrealistic => "unrealistic",
            Method::Basic => "one-vs-rest-basic",
            Method::BasicC => "one-vs-rest-basic-C",
            Method::NoEmpty => "one-vs-rest-no-empty",
            Method::Thresholding => "thresholding",
            Method::CostSensitive => "cost-sensitive",
            Method::CostSensitiveNoEmpty => "cost-sensitive-no-empty",
            Method::CostSensitiveSimple => "cost-sensitive-simple",
        }
    }

    /// The training procedure behind this method.
    pub fn training(&self) -> StrategyTag {
        match self {
            Method::Unrealistic | Method::Basic | Method::NoEmpty => StrategyTag::Basic,
            Method::BasicC => StrategyTag::BasicC,
            Method::Thresholding => StrategyTag::Thresholding,
            Method::CostSensitive | Method::CostSensitiveNoEmpty => StrategyTag::CostSensitive,
            Method::CostSensitiveSimple => StrategyTag::CostSensitiveSimple,
        }
    }

    pub fn prediction(&self) -> PredictionStrategy {
        match self {
            Method::Unrealistic => PredictionStrategy::Unrealistic,
            Method::NoEmpty => PredictionStrategy::NoEmpty,
            Method::Thresholding => PredictionStrategy::AsCalibrated,
            Method::CostSensitiveNoEmpty => PredictionStrategy::CostSensitiveNoEmpty,
            Method::Basic | Method::BasicC | Method::CostSensitive | Method::CostSensitiveSimple => {
                PredictionStrategy::Basic
            }
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Applies a prediction rule to a decision matrix.
///
/// `truth` is read only by [`PredictionStrategy::Unrealistic`], which fails
/// without it. Top-k needs a `k` and is not handled here.
pub fn apply_prediction(
    strategy: PredictionStrategy,
    decisions: &[Vec<f64>],
    truth: Option<&[Vec<usize>]>,
) -> Result<PredictionSet> {
    Ok(match strategy {
        PredictionStrategy::Basic => predict_basic(decisions),
        PredictionStrategy::AsCalibrated => predict_basic(decisions).tagged(strategy),
        PredictionStrategy::NoEmpty => predict_no_empty(decisions),
        PredictionStrategy::CostSensitiveNoEmpty => predict_no_empty(decisions).tagged(strategy),
        PredictionStrategy::Unrealistic => {
            let truth = truth.ok_or(Error::GroundTruthNotAllowed)?;
            let counts: Vec<usize> = truth.iter().map(Vec::len).collect();
            predict_unrealistic(decisions, &counts)?
        }
        PredictionStrategy::TopK => {
            return Err(Error::invalid("top-k prediction needs k; use predict_top_k"));
        }
    })
}

/// Declarative settings shared by `train` and `experiment`.
///
/// Every key is optional in the TOML file; see the field defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Feature files. With `labels` set they are dense matrices sharing that
    /// label file; otherwise each is a multi-label svmlight file.
    pub features: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Column names for the results table (default: file stems).
    pub names: Vec<String>,
    /// Training strategy used by `train`.
    pub strategy: String,
    /// Methods run by `experiment`.
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub k_folds: usize,
    /// Fixed C for `basic` and `thresholding`.
    pub c: f64,
    /// C grid for `basic-C` and for each t of the dense cost grid.
    pub c_grid: Option<Vec<f64>>,
    pub fbr: Vec<f64>,
    pub inner_folds: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub fit_bias: bool,
    pub label_one_based: bool,
    pub feature_one_based: bool,
    pub normalize: bool,
    /// Also report precision@k.
    pub precision_k: Option<usize>,
    pub allow_ground_truth: bool,
    /// Run seeds concurrently (more memory).
    pub parallel_seeds: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            features: Vec::new(),
            labels: None,
            names: Vec::new(),
            strategy: StrategyTag::Basic.as_str().to_string(),
            methods: Method::realistic(),
            seeds: vec![0, 1, 2, 3, 4],
            train_fraction: 0.8,
            k_folds: 5,
            c: 1.0,
            c_grid: None,
            fbr: DEFAULT_FBR.to_vec(),
            inner_folds: DEFAULT_INNER_FOLDS,
            tolerance: SolverOptions::default().tolerance,
            max_iter: SolverOptions::default().max_iter,
            fit_bias: true,
            label_one_based: false,
            feature_one_based: false,
            normalize: false,
            precision_k: None,
            allow_ground_truth: false,
            parallel_seeds: false,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    /// Reads a config file and makes its relative paths relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.features.iter_mut().for_each(fix);
        self.labels.iter_mut().for_each(fix);
        self.output_dir.iter_mut().for_each(fix);
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            label_one_based: self.label_one_based,
            feature_one_based: self.feature_one_based,
            normalize: self.normalize,
        }
    }

    pub fn ovr_options(&self) -> OvrOptions {
        OvrOptions {
            solver: SolverOptions {
                tolerance: self.tolerance,
                max_iter: self.max_iter,
            },
            fit_bias: self.fit_bias,
        }
    }

    pub fn c_grid(&self) -> Result<CGrid> {
        match &self.c_grid {
            Some(v) => CGrid::new(v.clone()),
            None => Ok(CGrid::default()),
        }
    }

    /// Training procedure named by `strategy`: a [`StrategyTag`] name or a
    /// method name such as `one-vs-rest-no-empty`. `unrealistic` is refused
    /// unless `allow_ground_truth` is set.
    pub fn strategy_tag(&self) -> Result<StrategyTag> {
        match self.strategy.parse::<Method>() {
            Ok(Method::Unrealistic) if !self.allow_ground_truth => Err(Error::GroundTruthNotAllowed),
            Ok(m) => Ok(m.training()),
            Err(_) => self.strategy.parse(),
        }
    }

    pub fn sources(&self) -> Vec<DataSource> {
        self.features
            .iter()
            .map(|f| match &self.labels {
                Some(labels) => DataSource::DensePair {
                    features: f.clone(),
                    labels: labels.clone(),
                },
                None => DataSource::Svmlight(f.clone()),
            })
            .collect()
    }

    pub fn representation_names(&self) -> Vec<String> {
        if !self.names.is_empty() {
            return self.names.clone();
        }
        self.features
            .iter()
            .map(|p| {
                p.file_stem()
                    .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie in (0, 1)"));
        }
        if self.k_folds < 2 {
            return Err(Error::invalid("k_folds must be at least 2"));
        }
        if self.inner_folds < 2 {
            return Err(Error::invalid("inner_folds must be at least 2"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid("c must be positive"));
        }
        if self.fbr.is_empty() || self.fbr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("fbr must be a nonempty list of values in [0, 1]"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 || self.max_iter == 0 {
            return Err(Error::invalid("tolerance must be positive and max_iter at least 1"));
        }
        if self.precision_k == Some(0) {
            return Err(Error::invalid("precision_k must be at least 1"));
        }
        if !self.names.is_empty() && self.names.len() != self.features.len() {
            return Err(Error::invalid("names must match features one to one"));
        }
        self.c_grid()?;
        self.strategy_tag()?;
        if self.methods.contains(&Method::Unrealistic) && !self.allow_ground_truth {
            return Err(Error::GroundTruthNotAllowed);
        }
        Ok(())
    }
}

/// Trains `strategy` on `train`; `seed` fixes the CV folds where they are used.
pub fn train_strategy(
    train: &SparseDataset,
    strategy: StrategyTag,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Calibrated> {
    let opts = cfg.ovr_options();
    let folds = || make_folds(train.n_instances(), cfg.k_folds, mix_seed(seed, FOLD_SALT));
    match strategy {
        StrategyTag::Basic => {
            let mut model = train_ovr_basic(train, cfg.c, &opts)?;
            model.provenance.seed = Some(seed);
            let labels = model
                .models
                .iter()
                .enumerate()
                .map(|(label, m)| LabelCalibration {
                    label,
                    c: m.c,
                    t: m.t,
                    fbr: None,
                    delta: m.delta,
                    cv_f1: f64::NAN,
                    fold_deltas: Vec::new(),
                    fold_f1: Vec::new(),
                })
                .collect();
            Ok(Calibrated {
                model,
                report: CalibrationReport { labels },
            })
        }
        StrategyTag::BasicC => train_ovr_basic_c(train, &cfg.c_grid()?, &folds()?, &opts),
        StrategyTag::Thresholding => calibrate_thresholding(train, cfg.c, &cfg.fbr, &folds()?, cfg.inner_folds, &opts),
        StrategyTag::CostSensitive => {
            calibrate_cost_sensitive(train, &CostGrid::dense_with(&cfg.c_grid()?), &folds()?, &opts)
        }
        StrategyTag::CostSensitiveSimple => {
            calibrate_cost_sensitive(train, &build_cost_grid(CostGridKind::Simple)?, &folds()?, &opts)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub representation: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub split_digest: String,
    pub fold_digest: String,
}

/// Scores of one method on one (representation, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub representation: String,
    pub method: Method,
    pub seed: u64,
    pub grid: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub representations: Vec<String>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub k_folds: usize,
    pub splits: Vec<SplitRecord>,
    /// True when every representation used the same split for each seed.
    pub shared_splits: bool,
    pub runs: Vec<RunRecord>,
}

impl ExperimentResults {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Methods × representations, one table per measure.
    pub fn table(&self, measure: Measure) -> ResultsTable {
        let mut table = ResultsTable::new(
            format!("{} (mean ± std over {} seeds)", measure.title(), self.seeds.len()),
            self.methods.iter().map(|m| m.to_string()).collect(),
            self.representations.clone(),
        );
        for run in &self.runs {
            let r = self.methods.iter().position(|m| *m == run.method);
            let c = self.representations.iter().position(|n| *n == run.representation);
            if let (Some(r), Some(c)) = (r, c) {
                table.push(r, c, measure.of(&run.metrics));
            }
        }
        table
    }

    /// Writes `results.json`, `tables.txt` and `splits/seed-<s>.txt`.
    pub fn write_to(&self, dir: &Path, splits: &[SplitPlan]) -> Result<()> {
        fs::create_dir_all(dir.join("splits"))?;
        fs::write(dir.join("results.json"), self.to_json()? + "\n")?;
        let tables = format!(
            "{}\n{}",
            self.table(Measure::MacroF1).render(),
            self.table(Measure::MicroF1).render()
        );
        fs::write(dir.join("tables.txt"), tables)?;
        for plan in splits {
            fs::write(
                dir.join("splits").join(format!("seed-{}.txt", plan.seed)),
                plan.to_text(),
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    MacroF1,
    MicroF1,
    InstanceF1,
}

impl Measure {
    pub fn title(&self) -> &'static str {
        match self {
            Measure::MacroF1 => "Macro-F1",
            Measure::MicroF1 => "Micro-F1",
            Measure::InstanceF1 => "Instance-F1",
        }
    }

    pub fn of(&self, m: &MetricsReport) -> f64 {
        match self {
            Measure::MacroF1 => m.macro_f1,
            Measure::MicroF1 => m.micro_f1,
            Measure::InstanceF1 => m.instance_f1,
        }
    }
}

/// Datasets plus the splits drawn for them.
pub struct PreparedExperiment {
    pub names: Vec<String>,
    pub datasets: Vec<SparseDataset>,
    pub splits: Vec<SplitPlan>,
}

/// Loads every representation and draws one split per seed.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedExperiment> {
    cfg.validate()?;
    if cfg.features.is_empty() {
        return Err(Error::invalid("experiment needs at least one feature file"));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("experiment needs at least one seed"));
    }
    let opts = cfg.parse_options();
    let datasets = cfg
        .sources()
        .iter()
        .map(|s| parse_dataset(s, &opts))
        .collect::<Result<Vec<_>>>()?;
    let n = datasets[0].n_instances();
    if let Some(d) = datasets.iter().find(|d| d.n_instances() != n) {
        return Err(Error::DimensionMismatch(format!(
            "feature files disagree on the number of instances ({n} vs {})",
            d.n_instances()
        )));
    }
    let splits = cfg
        .seeds
        .iter()
        .map(|&s| make_split(n, s, cfg.train_fraction))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedExperiment {
        names: cfg.representation_names(),
        datasets,
        splits,
    })
}

fn timed<T>(phase: &str, context: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    log::info!("{context}: {phase} took {:.3}s", start.elapsed().as_secs_f64());
    out
}

/// One (representation, seed) run of every configured method.
fn run_one(
    cfg: &ExperimentConfig,
    name: &str,
    data: &SparseDataset,
    seed: u64,
) -> Result<(SplitRecord, Vec<RunRecord>)> {
    let context = format!("{name} seed {seed}");
    // Each representation redraws its own split; equal digests confirm sharing.
    let split = make_split(data.n_instances(), seed, cfg.train_fraction)?;
    let train = data.subset(&split.train_indices);
    let test = data.subset(&split.test_indices);
    let folds: FoldPlan = make_folds(train.n_instances(), cfg.k_folds, mix_seed(seed, FOLD_SALT))?;
    let record = SplitRecord {
        representation: name.to_string(),
        seed,
        n_train: train.n_instances(),
        n_test: test.n_instances(),
        split_digest: split.digest(),
        fold_digest: folds.digest(),
    };

    let mut trained: Vec<(StrategyTag, String, Vec<Vec<f64>>)> = Vec::new();
    let mut runs = Vec::new();
    for &method in &cfg.methods {
        let tag = method.training();
        if !trained.iter().any(|(t, _, _)| *t == tag) {
            let calibrated = timed(&format!("train {tag}"), &context, || {
                train_strategy(&train, tag, cfg, seed)
            })?;
            let decisions = timed("decision values", &context, || {
                decision_matrix(&calibrated.model, &test)
            })?;
            trained.push((tag, calibrated.model.provenance.grid.clone(), decisions));
        }
        let (_, grid, decisions) = trained.iter().find(|(t, _, _)| *t == tag).expect("trained above");
        let truth = test.label_sets();
        let pred = apply_prediction(method.prediction(), decisions, Some(truth))?;
        let metrics = evaluate(truth, &pred, cfg.precision_k)?;
        runs.push(RunRecord {
            representation: name.to_string(),
            method,
            seed,
            grid: grid.clone(),
            metrics,
        });
    }
    Ok((record, runs))
}

/// Runs every configured method on every representation and seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentResults, Vec<SplitPlan>)> {
    let prepared = prepare(cfg)?;
    let jobs: Vec<(usize, u64)> = (0..prepared.datasets.len())
        .flat_map(|d| cfg.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let run = |&(d, seed): &(usize, u64)| run_one(cfg, &prepared.names[d], &prepared.datasets[d], seed);
    let outputs: Vec<(SplitRecord, Vec<RunRecord>)> = if cfg.parallel_seeds {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let splits: Vec<SplitRecord> = outputs.iter().map(|(s, _)| s.clone()).collect();
    let shared_splits = cfg.seeds.iter().all(|&seed| {
        let mut digests = splits.iter().filter(|s| s.seed == seed).map(|s| &s.split_digest);
        let first = digests.next();
        digests.all(|d| Some(d) == first)
    });
    if !shared_splits {
        return Err(Error::invalid(
            "representations received different splits for the same seed",
        ));
    }
    let results = ExperimentResults {
        representations: prepared.names,
        methods: cfg.methods.clone(),
        seeds: cfg.seeds.clone(),
        train_fraction: cfg.train_fraction,
        k_folds: cfg.k_folds,
        splits,
        shared_splits,
        runs: outputs.into_iter().flat_map(|(_, r)| r).collect(),
    };
    Ok((results, prepared.splits))
}
