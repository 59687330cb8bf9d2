//! `ovrlab` command-line interface.
//!
//! Exit codes: 0 success, 1 verification or assertion failure, 2 usage or
//! data error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ovrlab::data::{
    make_folds, make_split, parse_dataset, read_label_file, DataSource, ParseOptions, SparseDataset, SplitPlan,
};
use ovrlab::experiment::{apply_prediction, run_experiment, train_strategy, ExperimentConfig, Measure, Method};
use ovrlab::metrics::{evaluate, evaluate_sets};
use ovrlab::predict::{
    decision_matrix, predict_top_k, read_decisions_tsv, write_decisions_tsv, write_predictions, PredictionStrategy,
};
use ovrlab::theory::run_verification;
use ovrlab::trainer::OvRModel;

#[derive(Parser)]
#[command(name = "ovrlab", version, about = "One-vs-rest multi-label linear classification")]
struct Cli {
    /// Log filter when RUST_LOG is unset (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a one-vs-rest model and write it with its calibration report.
    Train(TrainArgs),
    /// Score a dataset with a trained model and write the predicted label sets.
    Predict(PredictArgs),
    /// Compute Macro/Micro/Instance-F1 and the Micro-F1 bound as JSON.
    Eval(EvalArgs),
    /// Run the repeated-split benchmark and write results and tables.
    Experiment(ExperimentArgs),
    /// Check the Micro-F1 results on synthetic data and run the over-estimation demo.
    Verify(VerifyArgs),
    /// Write a seeded train/test split plan (and optionally CV folds).
    Split(SplitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Part {
    All,
    Train,
    Test,
}

#[derive(Args)]
struct DataArgs {
    /// Multi-label svmlight file.
    #[arg(long, conflicts_with = "features")]
    data: Option<PathBuf>,
    /// Dense feature matrix (use with --labels).
    #[arg(long, requires = "labels")]
    features: Option<PathBuf>,
    /// Label file aligned with --features.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    label_one_based: bool,
    #[arg(long)]
    feature_one_based: bool,
    /// Scale every instance to unit L2 norm.
    #[arg(long)]
    normalize: bool,
    /// Split plan written by `split`; selects the rows given by --part.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    part: Part,
}

impl DataArgs {
    fn source(&self) -> Option<DataSource> {
        match (&self.data, &self.features, &self.labels) {
            (Some(d), _, _) => Some(DataSource::Svmlight(d.clone())),
            (None, Some(f), Some(l)) => Some(DataSource::DensePair {
                features: f.clone(),
                labels: l.clone(),
            }),
            _ => None,
        }
    }

    fn options(&self, cfg: Option<&ExperimentConfig>) -> ParseOptions {
        let base = cfg.map(ExperimentConfig::parse_options).unwrap_or_default();
        ParseOptions {
            label_one_based: self.label_one_based || base.label_one_based,
            feature_one_based: self.feature_one_based || base.feature_one_based,
            normalize: self.normalize || base.normalize,
        }
    }

    /// Loads the dataset, falling back to the first dataset in the config.
    fn load(&self, cfg: Option<&ExperimentConfig>) -> Result<SparseDataset> {
        let source = self
            .source()
            .or_else(|| cfg.and_then(|c| c.sources().into_iter().next()))
            .ok_or_else(|| anyhow!("no dataset given: use --data or --features with --labels"))?;
        let start = Instant::now();
        let data = parse_dataset(&source, &self.options(cfg)).with_context(|| format!("reading {source:?}"))?;
        log::info!(
            "loaded {} instances, {} features, {} labels in {:.3}s",
            data.n_instances(),
            data.n_features(),
            data.n_labels(),
            start.elapsed().as_secs_f64()
        );
        self.select(data)
    }

    fn select(&self, data: SparseDataset) -> Result<SparseDataset> {
        let Some(path) = &self.split else {
            if !matches!(self.part, Part::All) {
                bail!("--part needs --split");
            }
            return Ok(data);
        };
        let plan =
            SplitPlan::from_text(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?;
        if plan.n_instances != data.n_instances() {
            bail!(
                "split plan covers {} instances but the dataset has {}",
                plan.n_instances,
                data.n_instances()
            );
        }
        Ok(match self.part {
            Part::All => data,
            Part::Train => data.subset(&plan.train_indices),
            Part::Test => data.subset(&plan.test_indices),
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// TOML config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// basic, basic-C, thresholding, cost-sensitive, cost-sensitive-simple,
    /// or any method name from the results tables.
    #[arg(long)]
    strategy: Option<String>,
    /// Seed for the CV folds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    fbr: Option<Vec<f64>>,
    #[arg(long)]
    k_folds: Option<usize>,
    #[arg(long)]
    inner_folds: Option<usize>,
    #[arg(long)]
    allow_ground_truth: bool,
    /// Model file to write.
    #[arg(long, short)]
    out: PathBuf,
    /// Calibration report (default: <out>.calibration.txt).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "basic")]
    strategy: String,
    /// Label count for top-k.
    #[arg(long)]
    k: Option<usize>,
    /// Truth label file, read only by the unrealistic strategy.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    allow_ground_truth: bool,
    /// Predicted label sets, one line per instance.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the decision values as TSV.
    #[arg(long)]
    decisions: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Truth label file.
    #[arg(long, conflicts_with = "data")]
    truth: Option<PathBuf>,
    /// Take the truth from a dataset instead.
    #[command(flatten)]
    data: DataArgs,
    /// Predicted label sets written by `predict`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Decision TSV; predictions are derived with --strategy.
    #[arg(long)]
    decisions: Option<PathBuf>,
    #[arg(long, default_value = "basic")]
    strategy: String,
    /// Also report precision@k (needs --decisions).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    allow_ground_truth: bool,
    /// Number of labels (default: inferred from the inputs).
    #[arg(long)]
    n_labels: Option<usize>,
    /// Write the JSON here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature files (replace the config's list).
    #[arg(long, num_args = 1..)]
    features: Vec<PathBuf>,
    /// Shared label file for dense feature files.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    names: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    k_folds: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    fbr: Option<Vec<f64>>,
    #[arg(long)]
    precision_k: Option<usize>,
    #[arg(long)]
    allow_ground_truth: bool,
    #[arg(long)]
    parallel_seeds: bool,
    #[arg(long)]
    label_one_based: bool,
    #[arg(long)]
    feature_one_based: bool,
    #[arg(long)]
    normalize: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    /// Number of instances (or give a dataset).
    #[arg(long, conflicts_with_all = ["data", "features"])]
    n: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, short)]
    out: PathBuf,
    /// Also write a k-fold plan over the training part.
    #[arg(long, requires = "folds_out")]
    folds: Option<usize>,
    #[arg(long)]
    folds_out: Option<PathBuf>,
}

/// Failure kinds mapped to exit codes.
enum Outcome {
    Ok,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Split(a) => cmd_split(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(ovrlab::Error::GroundTruthNotAllowed) = e.downcast_ref::<ovrlab::Error>() {
                eprintln!(
                    "hint: the unrealistic strategy reads test labels; pass --allow-ground-truth to run it anyway"
                );
            }
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Option<ExperimentConfig>> {
    path.map(|p| ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display())))
        .transpose()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_train(a: TrainArgs) -> Result<Outcome> {
    let file_cfg = load_config(a.config.as_deref())?;
    let mut cfg = file_cfg.clone().unwrap_or_default();
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    if let Some(c) = a.c {
        cfg.c = c;
    }
    if a.c_grid.is_some() {
        cfg.c_grid = a.c_grid;
    }
    if let Some(f) = a.fbr {
        cfg.fbr = f;
    }
    if let Some(k) = a.k_folds {
        cfg.k_folds = k;
    }
    if let Some(k) = a.inner_folds {
        cfg.inner_folds = k;
    }
    cfg.allow_ground_truth |= a.allow_ground_truth;
    // Experiment-only keys do not apply here.
    cfg.methods.retain(|m| *m != Method::Unrealistic);
    cfg.validate()?;
    let tag = cfg.strategy_tag()?;
    if cfg.strategy == Method::Unrealistic.as_str() {
        log::warn!("training for unrealistic prediction: the model is plain one-vs-rest; test label counts are read at predict time");
    }

    let train = a.data.load(file_cfg.as_ref())?;
    let start = Instant::now();
    let calibrated = train_strategy(&train, tag, &cfg, a.seed)?;
    log::info!("train {tag}: {:.3}s", start.elapsed().as_secs_f64());

    let mut w = create(&a.out)?;
    w.write_all(calibrated.model.to_text().as_bytes())?;
    w.flush()?;
    let report = a.report.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".calibration.txt");
        PathBuf::from(p)
    });
    fs::write(&report, calibrated.report.to_text(tag))?;
    log::info!("wrote {} and {}", a.out.display(), report.display());
    Ok(Outcome::Ok)
}

fn cmd_predict(a: PredictArgs) -> Result<Outcome> {
    let strategy: PredictionStrategy = a.strategy.parse()?;
    let model_text = fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model = OvRModel::from_text(&model_text)?;
    let test = a.data.load(None)?;

    let start = Instant::now();
    let decisions = decision_matrix(&model, &test)?;
    let pred = match strategy {
        PredictionStrategy::TopK => predict_top_k(&decisions, a.k.ok_or_else(|| anyhow!("top-k needs --k"))?)?,
        PredictionStrategy::Unrealistic => {
            if !a.allow_ground_truth {
                return Err(ovrlab::Error::GroundTruthNotAllowed.into());
            }
            let path = a.truth.ok_or_else(|| anyhow!("unrealistic prediction needs --truth"))?;
            let truth = read_label_file(&path, a.data.label_one_based)?;
            apply_prediction(strategy, &decisions, Some(&truth))?
        }
        _ => apply_prediction(strategy, &decisions, None)?,
    };
    log::info!("predict {strategy}: {:.3}s", start.elapsed().as_secs_f64());

    let mut w = create(&a.out)?;
    write_predictions(&mut w, &pred)?;
    w.flush()?;
    if let Some(path) = a.decisions {
        let mut w = create(&path)?;
        write_decisions_tsv(&mut w, &decisions)?;
        w.flush()?;
    }
    Ok(Outcome::Ok)
}

fn cmd_eval(a: EvalArgs) -> Result<Outcome> {
    let truth = match &a.truth {
        Some(path) => read_label_file(path, a.data.label_one_based)?,
        None => a.data.load(None)?.label_sets().to_vec(),
    };
    let decisions = a
        .decisions
        .as_ref()
        .map(|p| -> Result<_> { Ok(read_decisions_tsv(BufReader::new(File::open(p)?))?) })
        .transpose()?;
    let infer = |sets: &[Vec<usize>]| sets.iter().flatten().max().map_or(0, |m| m + 1);
    let report = match (&a.predictions, &decisions) {
        (Some(path), _) => {
            // predictions are stored zero-based regardless of the input convention
            let predicted = read_label_file(path, false)?;
            let n_labels = a.n_labels.unwrap_or_else(|| {
                let from_decisions = decisions.as_ref().and_then(|d| d.first()).map_or(0, Vec::len);
                infer(&truth).max(infer(&predicted)).max(from_decisions)
            });
            let ranking = match (a.k, &decisions) {
                (Some(k), Some(d)) => Some((k, &d[..])),
                (Some(_), None) => bail!("precision@k needs --decisions"),
                _ => None,
            };
            evaluate_sets(&truth, &predicted, n_labels, ranking)?
        }
        (None, Some(d)) => {
            let strategy: PredictionStrategy = a.strategy.parse()?;
            let pred = match strategy {
                PredictionStrategy::TopK => predict_top_k(d, a.k.ok_or_else(|| anyhow!("top-k needs --k"))?)?,
                PredictionStrategy::Unrealistic if !a.allow_ground_truth => {
                    return Err(ovrlab::Error::GroundTruthNotAllowed.into());
                }
                _ => apply_prediction(strategy, d, Some(&truth))?,
            };
            let mut report = evaluate(&truth, &pred, a.k)?;
            if let Some(n) = a.n_labels {
                if n != report.n_labels {
                    bail!("--n-labels {n} disagrees with {} decision columns", report.n_labels);
                }
            }
            report.strategy = Some(strategy.to_string());
            report
        }
        (None, None) => bail!("eval needs --predictions or --decisions"),
    };
    let json = report.to_json()? + "\n";
    match &a.out {
        Some(path) => fs::write(path, &json)?,
        None => print!("{json}"),
    }
    if !report.micro_within_bound {
        eprintln!(
            "check failed: Micro-F1 {} exceeds its bound {}",
            report.micro_f1, report.micro_upper_bound
        );
        return Ok(Outcome::CheckFailed);
    }
    Ok(Outcome::Ok)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<Outcome> {
    let mut cfg = load_config(a.config.as_deref())?.unwrap_or_default();
    if !a.features.is_empty() {
        cfg.features = a.features;
        cfg.names.clear();
    }
    if a.labels.is_some() {
        cfg.labels = a.labels;
    }
    if let Some(n) = a.names {
        cfg.names = n;
    }
    if let Some(m) = a.methods {
        cfg.methods = m.iter().map(|s| s.parse()).collect::<ovrlab::Result<_>>()?;
    }
    if let Some(s) = a.seeds {
        cfg.seeds = s;
    }
    if let Some(f) = a.train_fraction {
        cfg.train_fraction = f;
    }
    if let Some(k) = a.k_folds {
        cfg.k_folds = k;
    }
    if let Some(c) = a.c {
        cfg.c = c;
    }
    if a.c_grid.is_some() {
        cfg.c_grid = a.c_grid;
    }
    if let Some(f) = a.fbr {
        cfg.fbr = f;
    }
    if a.precision_k.is_some() {
        cfg.precision_k = a.precision_k;
    }
    if a.out.is_some() {
        cfg.output_dir = a.out;
    }
    cfg.allow_ground_truth |= a.allow_ground_truth;
    cfg.parallel_seeds |= a.parallel_seeds;
    cfg.label_one_based |= a.label_one_based;
    cfg.feature_one_based |= a.feature_one_based;
    cfg.normalize |= a.normalize;

    let start = Instant::now();
    let (results, splits) = run_experiment(&cfg)?;
    log::info!("experiment: {:.3}s", start.elapsed().as_secs_f64());

    let macro_table = results.table(Measure::MacroF1).render();
    let micro_table = results.table(Measure::MicroF1).render();
    print!("{macro_table}\n{micro_table}");
    match &cfg.output_dir {
        Some(dir) => {
            results.write_to(dir, &splits)?;
            log::info!("wrote results to {}", dir.display());
        }
        None => log::warn!("no output directory given; results JSON not written"),
    }
    Ok(Outcome::Ok)
}

fn cmd_verify(a: VerifyArgs) -> Result<Outcome> {
    let start = Instant::now();
    let report = run_verification(a.seed, a.trials)?;
    log::info!("verify: {:.3}s", start.elapsed().as_secs_f64());
    let text = report.to_text();
    print!("{text}");
    if let Some(path) = &a.text {
        fs::write(path, &text)?;
    }
    if let Some(path) = &a.json {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(if report.passed {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

fn cmd_split(a: SplitArgs) -> Result<Outcome> {
    let n = match a.n {
        Some(n) => n,
        None => a.data.load(None)?.n_instances(),
    };
    let plan = make_split(n, a.seed, a.train_fraction)?;
    fs::write(&a.out, plan.to_text())?;
    println!(
        "split {} train {} test {} digest {}",
        a.out.display(),
        plan.train_indices.len(),
        plan.test_indices.len(),
        plan.digest()
    );
    if let (Some(k), Some(path)) = (a.folds, &a.folds_out) {
        let folds = make_folds(plan.train_indices.len(), k, a.seed)?;
        fs::write(path, folds.to_text())?;
        println!("folds {} k {k} digest {}", path.display(), folds.digest());
    }
    Ok(Outcome::Ok)
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        super::Cli::command().debug_assert();
    }
}
