//! Empirical quantiles and the differentiable L-estimators used as plug-in
//! thresholds.
//!
//! Every estimator returns a [`QuantileResult`]: the estimate together with
//! the weight each input score carries in it. Because all estimators are
//! weighted averages of order statistics with rank-dependent weights, the
//! weight vector is also the derivative of the estimate with respect to the
//! scores while the sort permutation stays fixed. The loss gradients rely
//! on this.
//!
//! Rank counts `k = max{k : k/n ≤ c}` are computed with a small absolute
//! tolerance on `c·n` so that levels such as `1 - 0.9` land on the grid
//! point they denote.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::QuantileEstimatorSpec;

const RANK_TOL: f64 = 1e-9;

/// Largest `k ∈ [0, n]` with `k/n ≤ level`.
pub fn rank_count(level: f64, n: usize) -> usize {
    let k = (level * n as f64 + RANK_TOL).floor();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(n)
    }
}

/// Indices of `scores` in ascending score order; ties keep input order.
pub fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

fn check_level(c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::invalid(format!("quantile level must lie in [0, 1], got {c}")));
    }
    Ok(())
}

/// An estimate with the per-score weights that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileResult {
    pub value: f64,
    /// Aligned with the input scores.
    pub weights: Vec<f64>,
    /// Input indices with nonzero weight, in ascending score order.
    pub support: Vec<usize>,
}

impl QuantileResult {
    fn from_sorted(scores: &[f64], order: &[usize], sorted_weights: &[f64]) -> Self {
        let mut weights = vec![0.0; scores.len()];
        let mut support = Vec::new();
        let mut value = 0.0;
        for (&idx, &w) in order.iter().zip(sorted_weights) {
            if w != 0.0 {
                weights[idx] = w;
                support.push(idx);
                value += w * scores[idx];
            }
        }
        Self {
            value,
            weights,
            support,
        }
    }

    fn one_hot(scores: &[f64], idx: usize) -> Self {
        let mut weights = vec![0.0; scores.len()];
        weights[idx] = 1.0;
        Self {
            value: scores[idx],
            weights,
            support: vec![idx],
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// The `k`-th ascending order statistic with `k = max{k ≥ 1 : k/n ≤ c}`,
/// or the minimum when `c < 1/n`.
pub fn exact_quantile(scores: &[f64], c: f64) -> Result<f64> {
    Ok(point_estimator(scores, c)?.value)
}

/// One-hot estimator on the order statistic chosen by [`exact_quantile`].
/// Among tied scores the weight goes to the last one in sorted order.
pub fn point_estimator(scores: &[f64], c: f64) -> Result<QuantileResult> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_level(c)?;
    let order = ascending_order(scores);
    let n = scores.len();
    let mut pos = rank_count(c, n).max(1) - 1;
    while pos + 1 < n && scores[order[pos + 1]] == scores[order[pos]] {
        pos += 1;
    }
    Ok(QuantileResult::one_hot(scores, order[pos]))
}

/// Gaussian kernel quantile estimator.
///
/// The order statistic `s_(i)` gets raw weight `φ_h(i*/n - c)`, where
/// `i*` is the last rank of its tie run and `φ_h` the Gaussian density with
/// standard deviation `h`. With `normalize` (and not `paper_exact`) the
/// weights are rescaled to sum to one, otherwise they are divided by `n`.
pub fn kernel_estimator(
    scores: &[f64],
    c: f64,
    bandwidth: f64,
    normalize: bool,
    paper_exact: bool,
) -> Result<QuantileResult> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bandwidth.is_nan() || bandwidth <= 0.0 {
        return Err(Error::NonpositiveScale(bandwidth));
    }
    check_level(c)?;
    let order = ascending_order(scores);
    let n = scores.len();
    let nf = n as f64;

    let mut tie_rank = vec![0usize; n];
    let mut end = n;
    for pos in (0..n).rev() {
        if pos + 1 < n && scores[order[pos + 1]] != scores[order[pos]] {
            end = pos + 1;
        }
        tie_rank[pos] = end;
    }

    let two_h2 = 2.0 * bandwidth * bandwidth;
    let log_norm = -(bandwidth * (2.0 * PI).sqrt()).ln();
    let log_u: Vec<f64> = tie_rank
        .iter()
        .map(|&r| {
            let x = r as f64 / nf - c;
            log_norm - x * x / two_h2
        })
        .collect();

    let weights: Vec<f64> = if normalize && !paper_exact {
        // Computed in log space: for small h the raw densities underflow.
        let max = log_u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let u: Vec<f64> = log_u.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = u.iter().sum();
        u.into_iter().map(|v| v / total).collect()
    } else {
        log_u.iter().map(|l| l.exp() / nf).collect()
    };
    Ok(QuantileResult::from_sorted(scores, &order, &weights))
}

/// Mean of the `k` smallest scores, `k = max(1, max{k : k/n ≤ c})`.
pub fn lower_mean_estimator(scores: &[f64], c: f64) -> Result<QuantileResult> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_level(c)?;
    let order = ascending_order(scores);
    let k = rank_count(c, scores.len()).max(1);
    let w = 1.0 / k as f64;
    let sorted_weights: Vec<f64> = (0..scores.len()).map(|i| if i < k { w } else { 0.0 }).collect();
    Ok(QuantileResult::from_sorted(scores, &order, &sorted_weights))
}

/// Mean of the order statistics with ranks `⌊n·k1⌋+1 ..= ⌊n·k2⌋`.
pub fn interval_estimator(scores: &[f64], k1: f64, k2: f64) -> Result<QuantileResult> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0 < k1 && k1 < k2 && k2 < 1.0) {
        return Err(Error::invalid(format!(
            "interval bounds need 0 < k1 < k2 < 1, got ({k1}, {k2})"
        )));
    }
    let n = scores.len();
    let lower = rank_count(k1, n);
    let upper = rank_count(k2, n);
    if upper <= lower {
        return Err(Error::DegenerateInterval { n, lower, upper });
    }
    let order = ascending_order(scores);
    let w = 1.0 / (upper - lower) as f64;
    let sorted_weights: Vec<f64> = (0..n)
        .map(|i| if i >= lower && i < upper { w } else { 0.0 })
        .collect();
    Ok(QuantileResult::from_sorted(scores, &order, &sorted_weights))
}

/// Dispatches on the estimator variant. The interval estimator ignores `c`.
pub fn estimate(spec: &QuantileEstimatorSpec, scores: &[f64], c: f64) -> Result<QuantileResult> {
    match *spec {
        QuantileEstimatorSpec::Point => point_estimator(scores, c),
        QuantileEstimatorSpec::Kernel {
            bandwidth,
            normalize,
            paper_exact,
        } => kernel_estimator(scores, c, bandwidth, normalize, paper_exact),
        QuantileEstimatorSpec::LowerMean => lower_mean_estimator(scores, c),
        QuantileEstimatorSpec::Interval { lower, upper } => interval_estimator(scores, lower, upper),
    }
}
