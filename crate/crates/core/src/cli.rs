//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for runtime or configuration errors
//! (reported on stdout as `{"error": {"kind", "message"}}`), 2 for invalid
//! invocations.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::concentration::{
    convex_sgd_convergence, estimator_stability, loss_uniform_deviation, ConcentrationReport, ConvergenceSpec,
    ScoreLaw, StabilitySpec, UniformDeviationSpec,
};
use crate::data::{generate_synthetic, load_delimited, load_sparse, DelimitedOptions};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, DataSource, ExperimentConfig};
use crate::metrics::{calibrate_model, evaluate, pr_auc, precision_at_rate, precision_at_recall, uniform_recall_grid};
use crate::optim::multi_restart_train;
use crate::types::{Dataset, EvalReport, LinearModel, QuantileEstimatorSpec, SurrogateLossSpec, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "quantile-surrogate", version, about = "Train and evaluate linear classifiers under rate constraints")]
pub struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a JSON config and write it as JSON.
    Train(TrainArgs),
    /// Evaluate a trained model on a dataset.
    Eval(EvalArgs),
    /// Run a repeated train/test experiment.
    Experiment(ExperimentArgs),
    /// Run a concentration experiment.
    Concentration(ConcentrationArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataFormat {
    /// Delimited text, label in the last column.
    Csv,
    /// `label idx:val …` lines.
    Sparse,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: DataFormat,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// `p_at_rate:TAU`, `p_at_recall:C` or `pr_auc:CELLS`.
    #[arg(long)]
    pub metric: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: DataFormat,
    /// Delimited-format options as JSON, for non-default files.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// ionosphere, housing, synthetic or custom (requires --config).
    pub preset: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Delimited data file replacing the preset's data source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Maximum concurrent repetitions.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    /// JSON concentration spec; defaults to the kernel stability run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON report path; a CSV table is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Contents of a `train` config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub loss: SurrogateLossSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub data: DelimitedOptions,
}

/// Contents of a `train` output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub final_train_loss: f64,
    pub loss_trace: Vec<f64>,
    pub restart_index: usize,
    pub seed_used: u64,
    pub config: TrainJob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConcentrationJob {
    EstimatorStability(StabilitySpec),
    LossUniformDeviation {
        data: DataSource,
        #[serde(flatten)]
        spec: UniformDeviationSpec,
    },
    ConvexSgdConvergence {
        data: DataSource,
        #[serde(flatten)]
        spec: ConvergenceSpec,
    },
}

impl Default for ConcentrationJob {
    fn default() -> Self {
        ConcentrationJob::EstimatorStability(StabilitySpec {
            population: 20_000,
            batch_sizes: (0..9).map(|i| 50 << i).collect(),
            trials: 500,
            estimator: QuantileEstimatorSpec::kernel(0.05),
            level: 0.5,
            score_law: ScoreLaw::Uniform,
            seed: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum MetricSpec {
    PAtRate { tau: f64 },
    PAtRecall { recall: f64 },
    PrAuc { cells: usize },
}

impl std::str::FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("metric must look like name:value, got {s:?}")))?;
        let number = |what: &str| -> Result<f64> {
            arg.parse()
                .map_err(|_| Error::invalid(format!("{what} must be a number, got {arg:?}")))
        };
        let spec = match name {
            "p_at_rate" => MetricSpec::PAtRate { tau: number("tau")? },
            "p_at_recall" => MetricSpec::PAtRecall { recall: number("recall")? },
            "pr_auc" => MetricSpec::PrAuc {
                cells: arg
                    .parse()
                    .map_err(|_| Error::invalid(format!("pr_auc cells must be a positive integer, got {arg:?}")))?,
            },
            other => return Err(Error::invalid(format!("unknown metric {other:?}"))),
        };
        match spec {
            MetricSpec::PAtRate { tau } if !(tau > 0.0 && tau <= 1.0) => {
                Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")))
            }
            MetricSpec::PAtRecall { recall } if !(recall > 0.0 && recall <= 1.0) => {
                Err(Error::invalid(format!("recall must lie in (0, 1], got {recall}")))
            }
            MetricSpec::PrAuc { cells: 0 } => Err(Error::invalid("pr_auc needs at least one cell")),
            ok => Ok(ok),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    #[serde(flatten)]
    pub metric: MetricSpec,
    pub value: f64,
    /// Confusion counts at the model's stored threshold.
    pub report: EvalReport,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load(path: &Path, format: DataFormat, options: &DelimitedOptions) -> Result<Dataset> {
    match format {
        DataFormat::Csv => load_delimited(path, options),
        DataFormat::Sparse => load_sparse(path),
    }
}

struct Progress {
    quiet: bool,
}

impl Progress {
    fn say(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn cmd_train(args: &TrainArgs, progress: &Progress) -> Result<String> {
    let mut job: TrainJob = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        job.train.seed = seed;
    }
    job.loss.validate()?;
    job.train.validate()?;
    let dataset = load(&args.data, args.format, &job.data)?;
    let started = Instant::now();
    let result = multi_restart_train(&dataset, &job.loss, &job.train)?;
    let threshold = calibrate_model(&result.model, &dataset, &job.loss.constraint)?;
    progress.say(format_args!(
        "trained {} restart(s) in {:.2}s, loss {:.6}",
        job.train.restarts,
        started.elapsed().as_secs_f64(),
        result.final_train_loss
    ));
    let file = ModelFile {
        weights: result.model.weights,
        threshold,
        final_train_loss: result.final_train_loss,
        loss_trace: result.loss_trace,
        restart_index: result.restart_index,
        seed_used: result.seed_used,
        config: job,
    };
    let json = to_json(&file)?;
    write(&args.out, &json)?;
    Ok(String::new())
}

/// Evaluates `model` on `dataset` for one metric.
pub fn evaluate_metric(model: &LinearModel, dataset: &Dataset, metric: &MetricSpec) -> Result<EvalOutput> {
    let report = evaluate(model, dataset)?;
    let scores = model.scores(dataset)?;
    let labels = dataset.labels();
    let value = match *metric {
        MetricSpec::PAtRate { tau } => precision_at_rate(&scores, &labels, tau)?,
        MetricSpec::PAtRecall { recall } => precision_at_recall(&scores, &labels, recall)?,
        MetricSpec::PrAuc { cells } => pr_auc(&scores, &labels, &uniform_recall_grid(cells))?,
    };
    Ok(EvalOutput {
        metric: metric.clone(),
        value,
        report,
    })
}

fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let metric: MetricSpec = args.metric.parse()?;
    let file: ModelFile = read_json(&args.model)?;
    let options = match &args.config {
        Some(p) => read_json(p)?,
        None => file.config.data.clone(),
    };
    let dataset = load(&args.data, args.format, &options)?;
    let model = LinearModel::new(file.weights).with_threshold(file.threshold);
    model.validate()?;
    to_json(&evaluate_metric(&model, &dataset, &metric)?)
}

fn cmd_experiment(args: &ExperimentArgs, progress: &Progress) -> Result<String> {
    let mut config = match (args.preset.as_str(), &args.config) {
        ("custom", Some(path)) => read_json::<ExperimentConfig>(path)?,
        ("custom", None) => return Err(Error::invalid("the custom preset needs --config")),
        (name, None) => ExperimentConfig::preset(name)?,
        (_, Some(_)) => return Err(Error::invalid("--config is only used with the custom preset")),
    };
    if let Some(path) = &args.data {
        config.data = DataSource::Delimited {
            path: path.clone(),
            options: DelimitedOptions::default(),
        };
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(r) = args.repetitions {
        config.repetitions = r;
    }
    config.validate()?;
    let started = Instant::now();
    let record = run_experiment(&config, args.jobs)?;
    progress.say(format_args!(
        "{}: {} repetition(s) in {:.1}s",
        config.name,
        config.repetitions,
        started.elapsed().as_secs_f64()
    ));
    for row in record.rows.iter().filter(|r| r.selection == crate::experiment::Selection::TestMean) {
        progress.say(format_args!("  {:<24} level {:<6} {:.3} ± {:.3}", row.method, row.level, row.mean, row.std));
    }
    write(&args.out.join("record.json"), &to_json(&record)?)?;
    write(&args.out.join("summary.csv"), &record.summary_csv()?)?;
    write(&args.out.join("pr_points.csv"), &record.pr_points_csv()?)?;
    Ok(String::new())
}

fn source_dataset(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Ionosphere => Ok(crate::data::ionosphere()),
        DataSource::Housing => Ok(crate::data::housing()),
        DataSource::Delimited { path, options } => load_delimited(path, options),
        DataSource::Sparse { path } => load_sparse(path),
        DataSource::Synthetic { spec, .. } => generate_synthetic(spec),
    }
}

fn report_csv(x: &[usize], mean: &[f64], q95: &[f64], header: [&str; 3]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for ((b, m), q) in x.iter().zip(mean).zip(q95) {
        w.write_record([b.to_string(), m.to_string(), q.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Runs a concentration job; returns the JSON report and CSV table.
pub fn run_concentration(job: &ConcentrationJob) -> Result<(String, String)> {
    let header = ["b", "mean_abs_dev", "q95_abs_dev"];
    let table = |r: &ConcentrationReport| report_csv(&r.batch_sizes, &r.mean_abs_dev, &r.q95_abs_dev, header);
    match job {
        ConcentrationJob::EstimatorStability(spec) => {
            let r = estimator_stability(spec)?;
            Ok((to_json(&r)?, table(&r)?))
        }
        ConcentrationJob::LossUniformDeviation { data, spec } => {
            let r = loss_uniform_deviation(&source_dataset(data)?, spec)?;
            Ok((to_json(&r)?, table(&r)?))
        }
        ConcentrationJob::ConvexSgdConvergence { data, spec } => {
            let r = convex_sgd_convergence(&source_dataset(data)?, spec)?;
            let csv = report_csv(&r.step_grid, &r.mean_excess, &r.q95_excess, ["steps", "mean_excess", "q95_excess"])?;
            Ok((to_json(&r)?, csv))
        }
    }
}

fn cmd_concentration(args: &ConcentrationArgs, progress: &Progress) -> Result<String> {
    let mut job = match &args.config {
        Some(p) => read_json(p)?,
        None => ConcentrationJob::default(),
    };
    if let Some(seed) = args.seed {
        match &mut job {
            ConcentrationJob::EstimatorStability(s) => s.seed = seed,
            ConcentrationJob::LossUniformDeviation { spec, .. } => spec.seed = seed,
            ConcentrationJob::ConvexSgdConvergence { spec, .. } => spec.seed = seed,
        }
    }
    let started = Instant::now();
    let (json, csv) = run_concentration(&job)?;
    progress.say(format_args!("concentration run in {:.1}s", started.elapsed().as_secs_f64()));
    write(&args.out, &json)?;
    write(&args.out.with_extension("csv"), &csv)?;
    Ok(String::new())
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorObject<'a> {
    error: ErrorBody<'a>,
}

/// Error object printed on stdout for a failed command.
pub fn error_json(err: &Error) -> String {
    serde_json::to_string(&ErrorObject {
        error: ErrorBody {
            kind: err.kind(),
            message: err.to_string(),
        },
    })
    .expect("error object serializes")
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let progress = Progress { quiet: cli.quiet };
    let outcome = match &cli.command {
        Command::Train(a) => cmd_train(a, &progress),
        Command::Eval(a) => cmd_eval(a),
        Command::Experiment(a) => cmd_experiment(a, &progress),
        Command::Concentration(a) => cmd_concentration(a, &progress),
    };
    match outcome {
        Ok(stdout) => {
            print!("{stdout}");
            0
        }
        Err(e) => {
            println!("{}", error_json(&e));
            1
        }
    }
}
