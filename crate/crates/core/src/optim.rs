//! Momentum SGD on the surrogate losses.
//!
//! Each step descends the penalized-side mean of the minibatch loss plus
//! `weight_decay/2 · ‖w‖²`. The threshold estimate comes from a separate
//! constraint minibatch: the constraint members of the main batch, or an
//! independent draw from the constraint subset when its size is given.

use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::rng;
use crate::error::{Error, Result};
use crate::loss::{surrogate_loss, LossPlan};
use crate::types::{BatchSize, Dataset, LinearModel, StepSchedule, SurrogateLossSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    /// Final iterate; the threshold is left unset.
    pub model: LinearModel,
    /// Surrogate loss of `model` on the full training set.
    pub final_train_loss: f64,
    /// Full-set loss every `trace_interval` steps, plus the final step.
    pub loss_trace: Vec<f64>,
    pub restart_index: usize,
    pub seed_used: u64,
}

/// Draws main minibatches as consecutive slices of per-epoch shuffles.
struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl EpochSampler {
    fn new(n: usize, batch: usize) -> Self {
        EpochSampler {
            order: (0..n).collect(),
            cursor: n,
            batch,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> &[usize] {
        if self.cursor + self.batch > self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor += self.batch;
        &self.order[start..self.cursor]
    }
}

fn step_size(config: &TrainConfig, t: usize) -> f64 {
    match config.schedule {
        StepSchedule::Constant => config.learning_rate,
        StepSchedule::InverseSqrt => config.learning_rate / (t as f64).sqrt(),
    }
}

fn initial_weights(dimension: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dimension)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Algorithm 1 with heavy-ball momentum, from a Gaussian initialization.
pub fn sgd_train(dataset: &Dataset, spec: &SurrogateLossSpec, config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    let mut rng = rng(config.seed);
    let init = initial_weights(dataset.dimension(), config.init_scale, &mut rng);
    run(dataset, spec, config, init, rng)
}

/// As [`sgd_train`] but starting from `init`; the seed still drives the
/// minibatch draws.
pub fn sgd_train_from(
    dataset: &Dataset,
    spec: &SurrogateLossSpec,
    config: &TrainConfig,
    init: Vec<f64>,
) -> Result<TrainResult> {
    config.validate()?;
    if init.len() != dataset.dimension() {
        return Err(Error::Dimension {
            expected: dataset.dimension(),
            found: init.len(),
        });
    }
    run(dataset, spec, config, init, rng(config.seed))
}

fn run(
    dataset: &Dataset,
    spec: &SurrogateLossSpec,
    config: &TrainConfig,
    mut w: Vec<f64>,
    mut rng: ChaCha8Rng,
) -> Result<TrainResult> {
    let plan = LossPlan::new(spec, dataset)?;
    let n = dataset.len();

    let mut is_penalized = vec![false; n];
    plan.penalized.iter().for_each(|&i| is_penalized[i] = true);
    let mut is_constraint = vec![false; n];
    plan.constraint.iter().for_each(|&i| is_constraint[i] = true);

    let mut sampler = match config.batch_size {
        BatchSize::Full => None,
        BatchSize::Size(b) if b > n => return Err(Error::BatchTooLarge { batch: b, population: n }),
        BatchSize::Size(b) => Some(EpochSampler::new(n, b)),
    };

    let mut velocity = vec![0.0; w.len()];
    let mut trace = Vec::with_capacity(config.steps / config.trace_interval + 1);
    let minibatch = sampler.is_some();
    let mut pen_b = Vec::new();
    let mut con_b = Vec::new();
    for t in 1..=config.steps {
        let batch: &[usize] = match sampler.as_mut() {
            Some(s) => s.next(&mut rng),
            None => &[],
        };
        pen_b.clear();
        con_b.clear();
        if minibatch {
            pen_b.extend(batch.iter().copied().filter(|&i| is_penalized[i]));
        } else {
            pen_b.extend_from_slice(&plan.penalized);
        }
        match config.constraint_batch_size {
            BatchSize::Size(m) if m < plan.constraint.len() => {
                let picks = index::sample(&mut rng, plan.constraint.len(), m);
                con_b.extend(picks.iter().map(|j| plan.constraint[j]));
                con_b.sort_unstable();
            }
            BatchSize::Size(_) => con_b.extend_from_slice(&plan.constraint),
            BatchSize::Full if minibatch => con_b.extend(batch.iter().copied().filter(|&i| is_constraint[i])),
            BatchSize::Full => con_b.extend_from_slice(&plan.constraint),
        }
        if con_b.is_empty() {
            return Err(Error::ConstraintBatchEmpty);
        }

        let mut grad = vec![0.0; w.len()];
        if !pen_b.is_empty() {
            let (_, g) = plan.value_and_gradient(&w, dataset, &pen_b, &con_b)?;
            let scale = 1.0 / pen_b.len() as f64;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a = b * scale);
        }
        for (g, wi) in grad.iter_mut().zip(&w) {
            *g += config.weight_decay * wi;
        }
        let gamma = step_size(config, t);
        for ((v, wi), g) in velocity.iter_mut().zip(w.iter_mut()).zip(&grad) {
            *v = config.momentum * *v - gamma * g;
            *wi += *v;
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        if t % config.trace_interval == 0 || t == config.steps {
            trace.push(full_loss(&w, dataset, spec)?);
        }
    }

    let final_train_loss = *trace.last().expect("at least one step");
    Ok(TrainResult {
        model: LinearModel::new(w),
        final_train_loss,
        loss_trace: trace,
        restart_index: 0,
        seed_used: config.seed,
    })
}

fn full_loss(w: &[f64], dataset: &Dataset, spec: &SurrogateLossSpec) -> Result<f64> {
    Ok(surrogate_loss(&LinearModel::new(w.to_vec()), dataset, spec)?.value)
}

/// The full-batch objective the optimizer descends: penalized-side mean
/// surrogate loss plus `weight_decay/2 · ‖w‖²`.
pub fn training_objective(w: &[f64], dataset: &Dataset, spec: &SurrogateLossSpec, weight_decay: f64) -> Result<f64> {
    let loss = surrogate_loss(&LinearModel::new(w.to_vec()), dataset, spec)?;
    let count = loss.per_sample.as_ref().map_or(1, Vec::len) as f64;
    let norm2: f64 = w.iter().map(|x| x * x).sum();
    Ok(loss.value / count + 0.5 * weight_decay * norm2)
}

/// Full-batch gradient descent with momentum.
pub fn gd_train(dataset: &Dataset, spec: &SurrogateLossSpec, config: &TrainConfig) -> Result<TrainResult> {
    let config = TrainConfig {
        batch_size: BatchSize::Full,
        constraint_batch_size: BatchSize::Full,
        ..config.clone()
    };
    sgd_train(dataset, spec, &config)
}

/// One [`sgd_train`] run per restart, with seeds `seed, seed + 1, …`.
pub fn train_restarts(
    dataset: &Dataset,
    spec: &SurrogateLossSpec,
    config: &TrainConfig,
) -> Result<Vec<TrainResult>> {
    config.validate()?;
    (0..config.restarts)
        .map(|r| {
            let seed = config.seed.wrapping_add(r as u64);
            let cfg = TrainConfig { seed, ..config.clone() };
            let mut result = sgd_train(dataset, spec, &cfg)?;
            result.restart_index = r;
            Ok(result)
        })
        .collect()
}

/// Restart with the lowest full-set loss; ties keep the earliest.
pub fn select_best(results: Vec<TrainResult>) -> Option<TrainResult> {
    results.into_iter().reduce(|best, r| {
        if r.final_train_loss < best.final_train_loss {
            r
        } else {
            best
        }
    })
}

pub fn multi_restart_train(
    dataset: &Dataset,
    spec: &SurrogateLossSpec,
    config: &TrainConfig,
) -> Result<TrainResult> {
    let results = train_restarts(dataset, spec, config)?;
    Ok(select_best(results).expect("restarts >= 1"))
}
