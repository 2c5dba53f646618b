//! Subsampling experiments for estimator and loss concentration.
//!
//! Each experiment measures how far a statistic computed on `b` points
//! drawn without replacement strays from its full-population value, and
//! fits the slope of `log(mean deviation)` against `log b`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::rng;
use crate::error::{Error, Result};
use crate::loss::LossPlan;
use crate::optim::{gd_train, sgd_train, sgd_train_from, training_objective};
use crate::quantile::{estimate, exact_quantile};
use crate::types::{BatchSize, Dataset, LinearModel, QuantileEstimatorSpec, SurrogateLossSpec, TrainConfig};

/// Distribution of the synthetic score population, always within [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreLaw {
    Uniform,
    /// Gaussian restricted to [-1, 1] by rejection.
    TruncatedGaussian { mean: f64, sd: f64 },
    Constant { value: f64 },
}

impl ScoreLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            ScoreLaw::TruncatedGaussian { mean, sd } if !(sd > 0.0) || !(-1.0..=1.0).contains(&mean) => {
                Err(Error::invalid("truncated gaussian needs sd > 0 and mean in [-1, 1]"))
            }
            ScoreLaw::Constant { value } if !(-1.0..=1.0).contains(&value) => {
                Err(Error::invalid("constant score must lie in [-1, 1]"))
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ScoreLaw::Uniform => rng.random_range(-1.0..=1.0),
            ScoreLaw::TruncatedGaussian { mean, sd } => loop {
                let x = mean + sd * rng.sample::<f64, _>(StandardNormal);
                if (-1.0..=1.0).contains(&x) {
                    break x;
                }
            },
            ScoreLaw::Constant { value } => value,
        }
    }

    pub fn population(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = rng(seed);
        Ok((0..n).map(|_| self.draw(&mut rng)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub batch_sizes: Vec<usize>,
    pub mean_abs_dev: Vec<f64>,
    pub q95_abs_dev: Vec<f64>,
    /// Least-squares slope over batch sizes with a positive mean
    /// deviation; absent with fewer than two such points.
    pub fitted_slope: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Trials per batch size that could not be evaluated (for example a
    /// subsample without constraint members).
    #[serde(default)]
    pub skipped_trials: Vec<usize>,
}

impl ConcentrationReport {
    fn from_deviations(batch_sizes: &[usize], devs: Vec<Vec<f64>>, trials: usize, seed: u64) -> Result<Self> {
        let mut mean = Vec::with_capacity(devs.len());
        let mut q95 = Vec::with_capacity(devs.len());
        let mut skipped = Vec::with_capacity(devs.len());
        for d in &devs {
            if d.is_empty() {
                return Err(Error::invalid("every trial at some batch size was skipped"));
            }
            mean.push(d.iter().sum::<f64>() / d.len() as f64);
            q95.push(exact_quantile(d, 0.95)?);
            skipped.push(trials - d.len());
        }
        let fitted_slope = log_log_slope(batch_sizes, &mean);
        Ok(ConcentrationReport {
            batch_sizes: batch_sizes.to_vec(),
            mean_abs_dev: mean,
            q95_abs_dev: q95,
            fitted_slope,
            trials,
            seed,
            skipped_trials: skipped,
        })
    }
}

/// Least-squares slope of `ln y` on `ln x`, ignoring nonpositive `y`.
pub fn log_log_slope(x: &[usize], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&a, &b)| ((a as f64).ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn check_batches(batch_sizes: &[usize], population: usize, trials: usize) -> Result<()> {
    if batch_sizes.is_empty() || batch_sizes[0] == 0 || batch_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("batch sizes must be positive and strictly increasing"));
    }
    let largest = *batch_sizes.last().unwrap();
    if largest > population {
        return Err(Error::BatchTooLarge {
            batch: largest,
            population,
        });
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    Ok(())
}

/// Generator for trial `trial` at batch-size position `slot`: the base
/// seed's key on its own stream, so trials are independent of one another
/// and of execution order.
fn trial_rng(seed: u64, slot: usize, trial: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((slot as u64 + 1) << 32) | trial as u64);
    r
}

/// Sorted subsample of `0..n` of size `b`.
fn subsample(rng: &mut ChaCha8Rng, n: usize, b: usize) -> Vec<usize> {
    let mut idx = index::sample(rng, n, b).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySpec {
    pub population: usize,
    pub batch_sizes: Vec<usize>,
    pub trials: usize,
    pub estimator: QuantileEstimatorSpec,
    pub level: f64,
    pub score_law: ScoreLaw,
    pub seed: u64,
}

/// `|q̂(F, c) − q̂(F̂, c)|` over subsamples `F̂` of a fixed population `F`.
pub fn estimator_stability(spec: &StabilitySpec) -> Result<ConcentrationReport> {
    spec.estimator.validate()?;
    check_batches(&spec.batch_sizes, spec.population, spec.trials)?;
    let population = spec.score_law.population(spec.population, spec.seed)?;
    let full = estimate(&spec.estimator, &population, spec.level)?.value;
    let mut devs = Vec::with_capacity(spec.batch_sizes.len());
    for (slot, &b) in spec.batch_sizes.iter().enumerate() {
        let mut row = Vec::with_capacity(spec.trials);
        let mut sub = vec![0.0; b];
        for trial in 0..spec.trials {
            let mut r = trial_rng(spec.seed, slot, trial);
            for (s, i) in sub.iter_mut().zip(subsample(&mut r, spec.population, b)) {
                *s = population[i];
            }
            row.push((full - estimate(&spec.estimator, &sub, spec.level)?.value).abs());
        }
        devs.push(row);
    }
    ConcentrationReport::from_deviations(&spec.batch_sizes, devs, spec.trials, spec.seed)
}

/// `n` models drawn uniformly from the Euclidean ball of radius `radius`;
/// a zero radius gives the single model `w = 0`.
pub fn models_in_ball(dimension: usize, radius: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if radius == 0.0 {
        return vec![vec![0.0; dimension]];
    }
    (0..n)
        .map(|_| {
            let dir: Vec<f64> = (0..dimension).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let r = radius * rng.random::<f64>().powf(1.0 / dimension as f64);
            dir.into_iter().map(|x| x * r / norm).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformDeviationSpec {
    pub loss: SurrogateLossSpec,
    pub batch_sizes: Vec<usize>,
    pub trials: usize,
    pub w_norm_bound: f64,
    pub n_models: usize,
    pub seed: u64,
}

/// Mean surrogate loss over `penalized` with the threshold taken on
/// `constraint`, or `None` when either set is empty.
fn mean_loss(plan: &LossPlan, scores: &[f64], penalized: &[usize], constraint: &[usize]) -> Result<Option<f64>> {
    if penalized.is_empty() || constraint.is_empty() {
        return Ok(None);
    }
    let theta = plan.threshold(scores, constraint)?.value;
    Ok(Some(plan.value(scores, penalized, theta) / penalized.len() as f64))
}

/// `sup_w |L̄(w; Z) − L̄(w; Ẑ)|` over a finite sample of models, where `L̄`
/// is the penalized-side mean loss and the subsample's constraint set is
/// its intersection with the full one. The supremum over the ball is
/// approximated by the sampled models.
pub fn loss_uniform_deviation(dataset: &Dataset, spec: &UniformDeviationSpec) -> Result<ConcentrationReport> {
    check_batches(&spec.batch_sizes, dataset.len(), spec.trials)?;
    if !(spec.w_norm_bound >= 0.0) || !spec.w_norm_bound.is_finite() || spec.n_models == 0 {
        return Err(Error::invalid("need a finite w_norm_bound >= 0 and n_models >= 1"));
    }
    let plan = LossPlan::new(&spec.loss, dataset)?;
    let n = dataset.len();
    let mut model_rng = rng(spec.seed);
    let models = models_in_ball(dataset.dimension(), spec.w_norm_bound, spec.n_models, &mut model_rng);
    let scores: Vec<Vec<f64>> = models
        .into_iter()
        .map(|w| LinearModel::new(w).scores(dataset))
        .collect::<Result<_>>()?;
    let full: Vec<f64> = scores
        .iter()
        .map(|s| Ok(mean_loss(&plan, s, &plan.penalized, &plan.constraint)?.expect("plan sets are nonempty")))
        .collect::<Result<_>>()?;

    let mut in_pen = vec![false; n];
    plan.penalized.iter().for_each(|&i| in_pen[i] = true);
    let mut in_con = vec![false; n];
    plan.constraint.iter().for_each(|&i| in_con[i] = true);

    let mut devs = Vec::with_capacity(spec.batch_sizes.len());
    for (slot, &b) in spec.batch_sizes.iter().enumerate() {
        let mut row = Vec::with_capacity(spec.trials);
        for trial in 0..spec.trials {
            let mut r = trial_rng(spec.seed, slot, trial);
            let idx = subsample(&mut r, n, b);
            let pen: Vec<usize> = idx.iter().copied().filter(|&i| in_pen[i]).collect();
            let con: Vec<usize> = idx.iter().copied().filter(|&i| in_con[i]).collect();
            let mut sup: Option<f64> = Some(0.0);
            for (s, &f) in scores.iter().zip(&full) {
                match mean_loss(&plan, s, &pen, &con)? {
                    Some(v) => sup = sup.map(|m| m.max((v - f).abs())),
                    None => {
                        sup = None;
                        break;
                    }
                }
            }
            row.extend(sup);
        }
        devs.push(row);
    }
    ConcentrationReport::from_deviations(&spec.batch_sizes, devs, spec.trials, spec.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSpec {
    /// Target recall of the lower-mean precision-at-recall loss.
    pub recall: f64,
    /// Optimizer settings; `steps` and `seed` are overridden per run.
    pub train: TrainConfig,
    pub step_grid: Vec<usize>,
    pub trials: usize,
    /// Radius of the reference search ball.
    pub search_radius: f64,
    pub search_points: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub step_grid: Vec<usize>,
    pub mean_excess: Vec<f64>,
    pub q95_excess: Vec<f64>,
    /// Per step count, the excess of every trial.
    pub excess: Vec<Vec<f64>>,
    pub reference_objective: f64,
    pub reference_weights: Vec<f64>,
    pub fitted_slope: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Best model found by scanning `points` candidates in the ball (a polar
/// grid in two dimensions) and refining the best with long full-batch
/// descent.
fn reference_model(
    dataset: &Dataset,
    loss: &SurrogateLossSpec,
    spec: &ConvergenceSpec,
) -> Result<(Vec<f64>, f64)> {
    let d = dataset.dimension();
    let lambda = spec.train.weight_decay;
    let candidates = if d == 2 {
        let side = (spec.search_points as f64).sqrt().ceil().max(2.0) as usize;
        let mut c = vec![vec![0.0, 0.0]];
        for i in 1..=side {
            let r = spec.search_radius * i as f64 / side as f64;
            for j in 0..side {
                let a = std::f64::consts::TAU * j as f64 / side as f64;
                c.push(vec![r * a.cos(), r * a.sin()]);
            }
        }
        c
    } else {
        let mut r = rng(spec.seed ^ 0x5eed);
        models_in_ball(d, spec.search_radius, spec.search_points, &mut r)
    };
    let mut best = (vec![0.0; d], f64::INFINITY);
    for w in candidates {
        let f = training_objective(&w, dataset, loss, lambda)?;
        if f < best.1 {
            best = (w, f);
        }
    }
    let refine = TrainConfig {
        batch_size: BatchSize::Full,
        constraint_batch_size: BatchSize::Full,
        learning_rate: spec.train.learning_rate.min(0.05),
        momentum: 0.9,
        steps: 20_000,
        trace_interval: 20_000,
        schedule: crate::types::StepSchedule::Constant,
        ..spec.train.clone()
    };
    let refined = sgd_train_from(dataset, loss, &refine, best.0.clone())?;
    let f = training_objective(&refined.model.weights, dataset, loss, lambda)?;
    Ok(if f < best.1 { (refined.model.weights, f) } else { best })
}

/// Excess training objective of SGD after `T` steps relative to a
/// searched reference, for each `T` in the grid.
pub fn convex_sgd_convergence(dataset: &Dataset, spec: &ConvergenceSpec) -> Result<ConvergenceReport> {
    if spec.step_grid.is_empty() || spec.step_grid.windows(2).any(|w| w[0] >= w[1]) || spec.trials == 0 {
        return Err(Error::invalid("step grid must be strictly increasing and trials positive"));
    }
    let loss = SurrogateLossSpec::precision_at_recall(spec.recall, QuantileEstimatorSpec::LowerMean)?;
    let (reference_weights, reference_objective) = reference_model(dataset, &loss, spec)?;
    let mut excess = Vec::with_capacity(spec.step_grid.len());
    for &steps in &spec.step_grid {
        let mut row = Vec::with_capacity(spec.trials);
        for trial in 0..spec.trials {
            let cfg = TrainConfig {
                steps,
                trace_interval: steps,
                seed: spec.seed.wrapping_add(trial as u64),
                ..spec.train.clone()
            };
            let r = sgd_train(dataset, &loss, &cfg)?;
            let f = training_objective(&r.model.weights, dataset, &loss, spec.train.weight_decay)?;
            row.push(f - reference_objective);
        }
        excess.push(row);
    }
    let mean: Vec<f64> = excess.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let q95 = excess.iter().map(|r| exact_quantile(r, 0.95)).collect::<Result<_>>()?;
    Ok(ConvergenceReport {
        fitted_slope: log_log_slope(&spec.step_grid, &mean),
        step_grid: spec.step_grid.clone(),
        mean_excess: mean,
        q95_excess: q95,
        excess,
        reference_objective,
        reference_weights,
        trials: spec.trials,
        seed: spec.seed,
    })
}

/// Full-batch variant used to sanity-check the reference search.
pub fn full_batch_objective(dataset: &Dataset, spec: &ConvergenceSpec, steps: usize) -> Result<f64> {
    let loss = SurrogateLossSpec::precision_at_recall(spec.recall, QuantileEstimatorSpec::LowerMean)?;
    let cfg = TrainConfig { steps, trace_interval: steps, ..spec.train.clone() };
    let r = gd_train(dataset, &loss, &cfg)?;
    training_objective(&r.model.weights, dataset, &loss, spec.train.weight_decay)
}
