//! Logistic regression followed by threshold adjustment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::calibrate_model;
use crate::types::{dot, Dataset, LinearModel, RateConstraint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub max_steps: usize,
    /// Stop once the gradient norm falls to this value.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            max_steps: 20_000,
            tolerance: 1e-6,
        }
    }
}

/// Appends a constant 1 feature to every sample.
pub fn augment(dataset: &Dataset) -> Result<Dataset> {
    dataset.map_features(|x| {
        let mut row = x.to_vec();
        row.push(1.0);
        row
    })
}

/// Fitted logistic model with its bias as the last weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub model: LinearModel,
    pub objective: f64,
    pub gradient_norm: f64,
    pub steps: usize,
}

/// `Σ log(1 + exp(-y w·x̃)) + λ/2 ‖w‖²` and its gradient.
fn objective(w: &[f64], rows: &[(&[f64], f64)], lambda: f64) -> (f64, Vec<f64>) {
    let mut value = 0.5 * lambda * dot(w, w);
    let mut grad: Vec<f64> = w.iter().map(|x| lambda * x).collect();
    for &(x, y) in rows {
        let m = y * dot(w, x);
        value += if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
        // d/dm log(1 + e^{-m}) = -σ(-m)
        let s = -y * if m > 0.0 {
            let e = (-m).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + m.exp())
        };
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += s * xi;
        }
    }
    (value, grad)
}

/// Largest eigenvalue of `XᵀX` by power iteration.
fn gram_spectral_norm(rows: &[(&[f64], f64)], d: usize) -> f64 {
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut estimate = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; d];
        for &(x, _) in rows {
            let p = dot(x, &v);
            next.iter_mut().zip(x).for_each(|(n, xi)| *n += p * xi);
        }
        let norm = dot(&next, &next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        next.iter_mut().for_each(|n| *n /= norm);
        let converged = (norm - estimate).abs() <= 1e-10 * norm;
        estimate = norm;
        v = next;
        if converged {
            break;
        }
    }
    estimate
}

/// Fits the regularized logistic model with Nesterov momentum and step
/// `1/L`. When an accelerated step would raise the objective the momentum
/// is reset and a plain gradient step taken instead, so the objective is
/// nonincreasing.
pub fn logistic_fit(dataset: &Dataset, weight_decay: f64, config: &LogisticConfig) -> Result<LogisticFit> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    if dataset.count_positives() == 0 || dataset.count_positives() == dataset.len() {
        return Err(Error::SingleClass);
    }
    if !(weight_decay >= 0.0) || !weight_decay.is_finite() {
        return Err(Error::invalid(format!("weight decay must be >= 0, got {weight_decay}")));
    }
    let aug = augment(dataset)?;
    let rows: Vec<(&[f64], f64)> = aug
        .samples()
        .iter()
        .map(|s| (s.features(), f64::from(s.label())))
        .collect();
    let d = aug.dimension();
    let lipschitz = 0.25 * gram_spectral_norm(&rows, d) + weight_decay;
    let step = 1.0 / lipschitz;

    let mut x = vec![0.0; d];
    let (mut fx, mut gx) = objective(&x, &rows, weight_decay);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut steps = 0;
    while steps < config.max_steps && dot(&gx, &gx).sqrt() > config.tolerance {
        steps += 1;
        let (_, gy) = objective(&y, &rows, weight_decay);
        let mut next: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - step * g).collect();
        let (mut f_next, mut g_next) = objective(&next, &rows, weight_decay);
        if f_next > fx {
            t = 1.0;
            next = x.iter().zip(&gx).map(|(a, g)| a - step * g).collect();
            (f_next, g_next) = objective(&next, &rows, weight_decay);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = next.iter().zip(&x).map(|(n, o)| n + beta * (n - o)).collect();
        x = next;
        fx = f_next;
        gx = g_next;
        t = t_next;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic weights"));
    }
    Ok(LogisticFit {
        model: LinearModel::new(x),
        objective: fx,
        gradient_norm: dot(&gx, &gx).sqrt(),
        steps,
    })
}

/// Logistic weights over the bias-augmented features.
pub fn logistic_train(dataset: &Dataset, weight_decay: f64, config: &LogisticConfig) -> Result<LinearModel> {
    Ok(logistic_fit(dataset, weight_decay, config)?.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    /// Weights over bias-augmented features, threshold set.
    pub model: LinearModel,
    pub calibrated_threshold: f64,
}

impl BaselineResult {
    /// Scores of raw (unaugmented) samples.
    pub fn scores(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        self.model.scores(&augment(dataset)?)
    }
}

/// Trains by maximum likelihood, then moves the threshold to meet
/// `constraint` on the training data.
pub fn baseline_with_threshold(
    dataset: &Dataset,
    constraint: &RateConstraint,
    weight_decay: f64,
    config: &LogisticConfig,
) -> Result<BaselineResult> {
    constraint.validate()?;
    let model = logistic_train(dataset, weight_decay, config)?;
    let threshold = calibrate_model(&model, &augment(dataset)?, constraint)?;
    Ok(BaselineResult {
        model: model.with_threshold(threshold),
        calibrated_threshold: threshold,
    })
}
