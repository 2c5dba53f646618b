//! Repeated train/test experiments comparing quantile training with a
//! logistic-regression baseline.
//!
//! A repetition draws one train/test pair, fits the baseline once per
//! weight decay, trains the quantile model once per (level, weight decay)
//! with several restarts, and scores every fit on both sides. `Q1` is the
//! first restart alone and `Q3` the restart with the lowest training loss.
//! Weight decay is then selected two ways: by the best mean test metric
//! across repetitions, and per repetition by the training metric.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{augment, logistic_train, LogisticConfig};
use crate::data::{self, generate_synthetic, load_delimited, load_sparse, split, standardize, DelimitedOptions, SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metrics::{pr_curve, precision_at_rate, precision_at_recall, uniform_recall_grid, PRPoint};
use crate::optim::{select_best, train_restarts};
use crate::types::{Dataset, LinearModel, QuantileEstimatorSpec, SurrogateLossSpec, TrainConfig};

const PRESET_IONOSPHERE: &str = include_str!("../presets/ionosphere.json");
const PRESET_HOUSING: &str = include_str!("../presets/housing.json");
const PRESET_SYNTHETIC: &str = include_str!("../presets/synthetic.json");
const PAPER_CONSTANTS: &str = include_str!("../data/paper_constants.json");

pub const PRESETS: [&str; 3] = ["ionosphere", "housing", "synthetic"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Ionosphere,
    Housing,
    Delimited {
        path: PathBuf,
        #[serde(default)]
        options: DelimitedOptions,
    },
    Sparse {
        path: PathBuf,
    },
    /// Train and test sets drawn independently from one mixture; the test
    /// draw uses `test_seed_offset` added to the train seed.
    Synthetic {
        spec: SyntheticSpec,
        #[serde(default = "default_test_offset")]
        test_seed_offset: u64,
    },
}

fn default_test_offset() -> u64 {
    1_000_003
}

/// Evaluation targets; each level gets its own trained quantile model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Targets {
    /// Precision at predicted positive rate τ, training the
    /// false-positive form of the rate surrogate.
    PrecisionAtRate { rates: Vec<f64> },
    /// Precision at recall c, training the recall surrogate.
    PrecisionAtRecall { recalls: Vec<f64> },
}

impl Targets {
    pub fn levels(&self) -> &[f64] {
        match self {
            Targets::PrecisionAtRate { rates } => rates,
            Targets::PrecisionAtRecall { recalls } => recalls,
        }
    }

    fn loss(&self, level: f64, estimator: QuantileEstimatorSpec) -> Result<SurrogateLossSpec> {
        match self {
            Targets::PrecisionAtRate { .. } => SurrogateLossSpec::precision_at_rate(level, estimator),
            Targets::PrecisionAtRecall { .. } => SurrogateLossSpec::precision_at_recall(level, estimator),
        }
    }

    fn metric(&self, scores: &[f64], labels: &[i8], level: f64) -> Result<f64> {
        match self {
            Targets::PrecisionAtRate { .. } => precision_at_rate(scores, labels, level),
            Targets::PrecisionAtRecall { .. } => precision_at_recall(scores, labels, level),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: DataSource,
    pub targets: Targets,
    /// Used for file-backed sources; synthetic sources ignore it.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub stratified: bool,
    #[serde(default)]
    pub standardize: bool,
    pub repetitions: usize,
    pub seed: u64,
    pub estimator: QuantileEstimatorSpec,
    /// Optimizer settings for the quantile model; `weight_decay` and
    /// `seed` are set per run.
    pub train: TrainConfig,
    pub weight_decays: Vec<f64>,
    pub baseline_weight_decays: Vec<f64>,
    #[serde(default)]
    pub baseline: LogisticConfig,
    /// Cells of the recall grid for the PR-point output.
    #[serde(default = "default_pr_cells")]
    pub pr_cells: usize,
    /// Key into the transcribed comparison constants, if any.
    #[serde(default)]
    pub paper_table: Option<String>,
    #[serde(default)]
    pub methods: MethodLabels,
}

fn default_train_fraction() -> f64 {
    0.5
}

fn default_pr_cells() -> usize {
    20
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "ionosphere" => PRESET_IONOSPHERE,
            "housing" => PRESET_HOUSING,
            "synthetic" => PRESET_SYNTHETIC,
            other => return Err(Error::invalid(format!("unknown preset {other:?}; expected one of {PRESETS:?}"))),
        };
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be positive"));
        }
        let levels = self.targets.levels();
        if levels.is_empty() {
            return Err(Error::invalid("at least one target level is required"));
        }
        for &level in levels {
            self.targets.loss(level, self.estimator)?;
        }
        if self.weight_decays.is_empty() || self.baseline_weight_decays.is_empty() {
            return Err(Error::invalid("weight decay grids must be nonempty"));
        }
        if self.weight_decays.iter().chain(&self.baseline_weight_decays).any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::invalid("weight decays must be finite and >= 0"));
        }
        if !matches!(self.data, DataSource::Synthetic { .. }) && !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie in (0, 1)"));
        }
        if self.pr_cells == 0 {
            return Err(Error::invalid("pr_cells must be positive"));
        }
        self.train.validate()
    }

    fn load_full(&self) -> Result<Option<Dataset>> {
        Ok(match &self.data {
            DataSource::Ionosphere => Some(data::ionosphere()),
            DataSource::Housing => Some(data::housing()),
            DataSource::Delimited { path, options } => Some(load_delimited(path, options)?),
            DataSource::Sparse { path } => Some(load_sparse(path)?),
            DataSource::Synthetic { .. } => None,
        })
    }

    fn repetition_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }

    fn train_test(&self, full: Option<&Dataset>, rep: usize) -> Result<(Dataset, Dataset)> {
        let seed = self.repetition_seed(rep);
        let (train, test) = match (&self.data, full) {
            (DataSource::Synthetic { spec, test_seed_offset }, _) => {
                let train = generate_synthetic(&SyntheticSpec { seed, ..spec.clone() })?;
                let test = generate_synthetic(&SyntheticSpec { seed: seed.wrapping_add(*test_seed_offset), ..spec.clone() })?;
                (train, test)
            }
            (_, Some(full)) => split(full, &SplitSpec { train_fraction: self.train_fraction, seed, stratified: self.stratified })?,
            (_, None) => unreachable!("file-backed sources are loaded up front"),
        };
        if self.standardize {
            let (a, b, _) = standardize(&train, &test)?;
            Ok((a, b))
        } else {
            Ok((train, test))
        }
    }
}

/// Names used for the three methods in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodLabels {
    pub baseline: String,
    pub single: String,
    pub restarts: String,
}

impl Default for MethodLabels {
    fn default() -> Self {
        MethodLabels {
            baseline: "LR".into(),
            single: "Q1".into(),
            restarts: "Q3".into(),
        }
    }
}

/// Train and test metric of one fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitScore {
    pub train: f64,
    pub test: f64,
}

/// Everything measured in one repetition, indexed `[level][decay]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionOutcome {
    pub repetition: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub test_positives: usize,
    pub baseline: Vec<Vec<FitScore>>,
    pub single: Vec<Vec<FitScore>>,
    pub restarts: Vec<Vec<FitScore>>,
    /// First repetition only: fitted models and the test set, for the
    /// PR-point output.
    #[serde(skip)]
    kept: Option<KeptModels>,
}

#[derive(Debug, Clone, PartialEq)]
struct KeptModels {
    test: Dataset,
    /// Per baseline weight decay, over augmented features.
    baseline: Vec<LinearModel>,
    /// `[level][decay]` as (first restart, selected restart).
    quantile: Vec<Vec<(LinearModel, LinearModel)>>,
}

fn score_pair(targets: &Targets, level: f64, train: (&[f64], &[i8]), test: (&[f64], &[i8])) -> Result<FitScore> {
    Ok(FitScore {
        train: targets.metric(train.0, train.1, level)?,
        test: targets.metric(test.0, test.1, level)?,
    })
}

fn run_repetition(config: &ExperimentConfig, full: Option<&Dataset>, rep: usize) -> Result<RepetitionOutcome> {
    let (train, test) = config.train_test(full, rep)?;
    let levels = config.targets.levels();
    let (train_y, test_y) = (train.labels(), test.labels());
    let (train_aug, test_aug) = (augment(&train)?, augment(&test)?);

    let mut baseline_models = Vec::with_capacity(config.baseline_weight_decays.len());
    for &lambda in &config.baseline_weight_decays {
        let m = logistic_train(&train, lambda, &config.baseline)?;
        let s = (m.scores(&train_aug)?, m.scores(&test_aug)?);
        baseline_models.push((m, s));
    }

    let restarts = config.train.restarts;
    let mut out = RepetitionOutcome {
        repetition: rep,
        seed: config.repetition_seed(rep),
        train_size: train.len(),
        test_size: test.len(),
        test_positives: test.count_positives(),
        baseline: Vec::new(),
        single: Vec::new(),
        restarts: Vec::new(),
        kept: None,
    };
    let mut kept_quantile = Vec::new();
    for &level in levels {
        let loss = config.targets.loss(level, config.estimator)?;
        let mut row_b = Vec::new();
        let mut row_1 = Vec::new();
        let mut row_r = Vec::new();
        let mut row_m = Vec::new();
        for (lambda_idx, &lambda) in config.weight_decays.iter().enumerate() {
            let cfg = TrainConfig {
                weight_decay: lambda,
                seed: config
                    .train
                    .seed
                    .wrapping_add(((rep * config.weight_decays.len() + lambda_idx) * restarts) as u64),
                ..config.train.clone()
            };
            let runs = train_restarts(&train, &loss, &cfg)?;
            let first = runs[0].model.clone();
            let best = select_best(runs).expect("restarts >= 1").model;
            let pair = |m: &LinearModel| -> Result<FitScore> {
                score_pair(&config.targets, level, (&m.scores(&train)?, &train_y), (&m.scores(&test)?, &test_y))
            };
            row_1.push(pair(&first)?);
            row_r.push(pair(&best)?);
            row_m.push((first, best));
        }
        for (_, (s_train, s_test)) in &baseline_models {
            row_b.push(score_pair(&config.targets, level, (s_train, &train_y), (s_test, &test_y))?);
        }
        out.baseline.push(row_b);
        out.single.push(row_1);
        out.restarts.push(row_r);
        if rep == 0 {
            kept_quantile.push(row_m);
        }
    }
    if rep == 0 {
        out.kept = Some(KeptModels {
            test,
            baseline: baseline_models.into_iter().map(|(m, _)| m).collect(),
            quantile: kept_quantile,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// One weight decay per level: the best mean test metric.
    TestMean,
    /// Per repetition, the weight decay with the best training metric.
    TrainMetric,
}

impl Selection {
    pub fn label(self) -> &'static str {
        match self {
            Selection::TestMean => "test_mean",
            Selection::TrainMetric => "train_metric",
        }
    }
}

/// Aggregate result for one method at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub level: f64,
    pub selection: Selection,
    /// Chosen grid value for `TestMean`.
    pub weight_decay: Option<f64>,
    pub per_repetition: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(
    method: &str,
    level_idx: usize,
    level: f64,
    grid: &[f64],
    outcomes: &[RepetitionOutcome],
    pick: impl Fn(&RepetitionOutcome) -> &Vec<Vec<FitScore>>,
) -> [MethodRow; 2] {
    let by_decay: Vec<Vec<FitScore>> = (0..grid.len())
        .map(|j| outcomes.iter().map(|o| pick(o)[level_idx][j]).collect())
        .collect();
    // Strict comparison keeps the first grid entry on ties.
    let mut best = 0;
    let mut best_mean = f64::NEG_INFINITY;
    for (j, col) in by_decay.iter().enumerate() {
        let m = col.iter().map(|f| f.test).sum::<f64>() / col.len() as f64;
        if m > best_mean {
            best = j;
            best_mean = m;
        }
    }
    let test_mean: Vec<f64> = by_decay[best].iter().map(|f| f.test).collect();
    let train_sel: Vec<f64> = (0..outcomes.len())
        .map(|r| {
            let mut j_best = 0;
            for j in 1..grid.len() {
                if by_decay[j][r].train > by_decay[j_best][r].train {
                    j_best = j;
                }
            }
            by_decay[j_best][r].test
        })
        .collect();
    let row = |selection, weight_decay, per_repetition: Vec<f64>| {
        let (mean, std) = mean_std(&per_repetition);
        MethodRow {
            method: method.to_string(),
            level,
            selection,
            weight_decay,
            per_repetition,
            mean,
            std,
        }
    };
    [
        row(Selection::TestMean, Some(grid[best]), test_mean),
        row(Selection::TrainMetric, None, train_sel),
    ]
}

/// One transcribed comparison value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRow {
    pub source: String,
    pub citation: String,
    pub method: String,
    pub level: f64,
    pub mean: f64,
    pub std: Option<f64>,
}

#[derive(Deserialize)]
struct PaperMethod {
    mean: Vec<f64>,
    #[serde(default)]
    std: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct PaperTable {
    citation: String,
    #[serde(default)]
    tau_percent: Option<Vec<f64>>,
    #[serde(default)]
    recall: Option<f64>,
    methods: std::collections::BTreeMap<String, PaperMethod>,
}

/// Transcribed comparison rows for `table` (`ionosphere`, `housing` or
/// `synthetic`), levels as fractions.
pub fn paper_rows(table: &str) -> Result<Vec<PaperRow>> {
    let root: serde_json::Value = serde_json::from_str(PAPER_CONSTANTS)?;
    let source = root["source"].as_str().unwrap_or("paper").to_string();
    let Some(entry) = root.get(table) else {
        return Err(Error::invalid(format!("no transcribed values for {table:?}")));
    };
    let t: PaperTable = serde_json::from_value(entry.clone())?;
    let levels: Vec<f64> = match (&t.tau_percent, t.recall) {
        (Some(tau), _) => tau.iter().map(|p| p / 100.0).collect(),
        (None, Some(r)) => vec![r],
        (None, None) => return Err(Error::invalid("transcribed table has no levels")),
    };
    let mut rows = Vec::new();
    for (method, m) in &t.methods {
        for (i, (&level, &mean)) in levels.iter().zip(&m.mean).enumerate() {
            rows.push(PaperRow {
                source: source.clone(),
                citation: t.citation.clone(),
                method: method.clone(),
                level,
                mean,
                std: m.std.as_ref().map(|s| s[i]),
            });
        }
    }
    Ok(rows)
}

/// One PR-curve sample of a first-repetition model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPointRow {
    pub method: String,
    pub level: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub rng_algorithm: String,
    pub seed: u64,
    pub rows: Vec<MethodRow>,
    pub paper: Vec<PaperRow>,
    pub repetitions: Vec<RepetitionOutcome>,
    pub pr_points: Vec<PrPointRow>,
}

impl RunRecord {
    pub fn row(&self, method: &str, level: f64, selection: Selection) -> Option<&MethodRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.selection == selection && (r.level - level).abs() < 1e-12)
    }

    /// Flat table: one line per method, level and selection, followed by
    /// the transcribed comparison values.
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["source", "method", "level", "selection", "weight_decay", "repetitions", "mean", "std"])?;
        for r in &self.rows {
            w.write_record([
                "computed".to_string(),
                r.method.clone(),
                r.level.to_string(),
                r.selection.label().to_string(),
                r.weight_decay.map(|l| l.to_string()).unwrap_or_default(),
                r.per_repetition.len().to_string(),
                r.mean.to_string(),
                r.std.to_string(),
            ])?;
        }
        for p in &self.paper {
            w.write_record([
                p.source.clone(),
                p.method.clone(),
                p.level.to_string(),
                String::new(),
                String::new(),
                String::new(),
                p.mean.to_string(),
                p.std.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        into_string(w)
    }

    pub fn pr_points_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "level", "recall", "precision"])?;
        for p in &self.pr_points {
            w.write_record([p.method.clone(), p.level.to_string(), p.recall.to_string(), p.precision.to_string()])?;
        }
        into_string(w)
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Runs every repetition, using up to `jobs` threads. Results do not
/// depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<RunRecord> {
    config.validate()?;
    let full = config.load_full()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let outcomes: Vec<RepetitionOutcome> = pool.install(|| {
        (0..config.repetitions)
            .into_par_iter()
            .map(|rep| run_repetition(config, full.as_ref(), rep))
            .collect::<Result<_>>()
    })?;

    let levels = config.targets.levels();
    let mut rows = Vec::new();
    for (li, &level) in levels.iter().enumerate() {
        let names = &config.methods;
        rows.extend(aggregate(&names.baseline, li, level, &config.baseline_weight_decays, &outcomes, |o| &o.baseline));
        rows.extend(aggregate(&names.single, li, level, &config.weight_decays, &outcomes, |o| &o.single));
        rows.extend(aggregate(&names.restarts, li, level, &config.weight_decays, &outcomes, |o| &o.restarts));
    }

    let pr_points = first_repetition_pr(config, &outcomes[0], &rows)?;
    let paper = match &config.paper_table {
        Some(t) => paper_rows(t)?,
        None => Vec::new(),
    };
    Ok(RunRecord {
        config: config.clone(),
        rng_algorithm: data::RNG_ALGORITHM.to_string(),
        seed: config.seed,
        rows,
        paper,
        repetitions: outcomes,
        pr_points,
    })
}

/// PR samples on the first test set for each method at its test-selected
/// weight decay.
fn first_repetition_pr(config: &ExperimentConfig, first: &RepetitionOutcome, rows: &[MethodRow]) -> Result<Vec<PrPointRow>> {
    let kept = first.kept.as_ref().expect("first repetition keeps its models");
    let labels = kept.test.labels();
    let test_aug = augment(&kept.test)?;
    let grid = uniform_recall_grid(config.pr_cells);
    let chosen = |method: &str, level: f64, decays: &[f64]| -> usize {
        let value = rows
            .iter()
            .find(|r| r.method == method && r.selection == Selection::TestMean && r.level == level)
            .and_then(|r| r.weight_decay)
            .expect("every method has a test-selected row");
        decays.iter().position(|&l| l == value).expect("chosen value is in the grid")
    };
    let names = &config.methods;
    let mut out = Vec::new();
    for (li, &level) in config.targets.levels().iter().enumerate() {
        let lr = &kept.baseline[chosen(&names.baseline, level, &config.baseline_weight_decays)];
        let q1 = &kept.quantile[li][chosen(&names.single, level, &config.weight_decays)].0;
        let q3 = &kept.quantile[li][chosen(&names.restarts, level, &config.weight_decays)].1;
        for (method, scores) in [
            (&names.baseline, lr.scores(&test_aug)?),
            (&names.single, q1.scores(&kept.test)?),
            (&names.restarts, q3.scores(&kept.test)?),
        ] {
            let curve: Vec<PRPoint> = pr_curve(&scores, &labels, &grid)?;
            out.extend(curve.into_iter().map(|p| PrPointRow {
                method: method.to_string(),
                level,
                recall: p.recall_level,
                precision: p.precision,
            }));
        }
    }
    Ok(out)
}
