//! Exact evaluation under the strict `score > θ` rule.
//!
//! A threshold below the minimum score is represented by the next
//! representable float under the minimum, so that every sample counts as
//! predicted positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::ascending_order;
use crate::types::{Dataset, Direction, EvalReport, LinearModel, RateConstraint};

const COUNT_TOL: f64 = 1e-9;

/// Fraction of `scores` strictly above `threshold`.
pub fn rate(scores: &[f64], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let above = scores.iter().filter(|&&s| s > threshold).count();
    Ok(above as f64 / scores.len() as f64)
}

/// Largest float strictly below `x`.
pub fn just_below(x: f64) -> f64 {
    if x == 0.0 {
        return -f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits - 1)
    } else {
        f64::from_bits(bits + 1)
    }
}

/// Candidate thresholds with the number of scores strictly above each,
/// ascending: one position below the minimum, then each distinct score.
fn threshold_positions(sorted: &[f64]) -> Vec<(f64, usize)> {
    let n = sorted.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push((just_below(sorted[0]), n));
    for (i, &s) in sorted.iter().enumerate() {
        if i + 1 == n || sorted[i + 1] != s {
            out.push((s, n - i - 1));
        }
    }
    out
}

/// Threshold that satisfies a rate constraint on the subset scores.
///
/// For `AtLeast` this is the largest feasible threshold among the score
/// positions, which equals the `1 - c` empirical quantile when scores are
/// distinct; ties at that order statistic move it down so the constraint
/// still holds. For `AtMost` it is the smallest feasible position.
pub fn calibrate_threshold(scores: &[f64], direction: Direction, target: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::invalid(format!("rate target must lie in [0, 1], got {target}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let needed = target * sorted.len() as f64;
    let positions = threshold_positions(&sorted);
    let found = match direction {
        Direction::AtLeast => positions
            .iter()
            .rev()
            .find(|(_, above)| *above as f64 >= needed - COUNT_TOL),
        Direction::AtMost => positions
            .iter()
            .find(|(_, above)| *above as f64 <= needed + COUNT_TOL),
    };
    // The lowest position always meets `≥`, the highest always meets `≤`.
    Ok(found.expect("extreme thresholds are always feasible").0)
}

/// Calibrates `model` for `constraint` on `dataset`.
pub fn calibrate_model(
    model: &LinearModel,
    dataset: &Dataset,
    constraint: &RateConstraint,
) -> Result<f64> {
    let scores = model.scores(dataset)?;
    let idx = constraint.subset.resolve(dataset)?;
    if idx.is_empty() {
        return Err(Error::NoConstraintSubset);
    }
    let sub: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
    calibrate_threshold(&sub, constraint.direction, constraint.target)
}

/// Confusion counts for `scores` against `labels` at `threshold`.
pub fn confusion(scores: &[f64], labels: &[i8], threshold: f64) -> Result<EvalReport> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y > 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let predicted = tp + fp;
    Ok(EvalReport {
        tp,
        fp,
        tn,
        fn_,
        precision: (predicted > 0).then(|| tp as f64 / predicted as f64),
        recall: tp as f64 / (tp + fn_).max(1) as f64,
        rate: predicted as f64 / scores.len() as f64,
        threshold,
    })
}

pub fn evaluate(model: &LinearModel, dataset: &Dataset) -> Result<EvalReport> {
    let threshold = model.threshold.ok_or(Error::Uncalibrated)?;
    confusion(&model.scores(dataset)?, &dataset.labels(), threshold)
}

/// Precision of the top `K = max(1, ⌊τN⌋)` scores. Samples tied with the
/// cut are excluded together, so fewer than `K` may be predicted; with no
/// predicted positives the precision is reported as 0.
pub fn precision_at_rate(scores: &[f64], labels: &[i8], tau: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("rate must lie in (0, 1], got {tau}")));
    }
    let n = scores.len();
    let k = crate::quantile::rank_count(tau, n).max(1);
    let threshold = calibrate_threshold(scores, Direction::AtMost, k as f64 / n as f64)?;
    Ok(confusion(scores, labels, threshold)?.precision.unwrap_or(0.0))
}

/// Precision at the threshold calibrated for recall at least `c`.
pub fn precision_at_recall(scores: &[f64], labels: &[i8], recall: f64) -> Result<f64> {
    Ok(recall_operating_point(scores, labels, recall)?.precision)
}

fn recall_operating_point(scores: &[f64], labels: &[i8], recall: f64) -> Result<PRPoint> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if !(recall > 0.0 && recall <= 1.0) {
        return Err(Error::invalid(format!("recall must lie in (0, 1], got {recall}")));
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y > 0)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() {
        return Err(Error::NoConstraintSubset);
    }
    let threshold = calibrate_threshold(&pos, Direction::AtLeast, recall)?;
    let report = confusion(scores, labels, threshold)?;
    Ok(PRPoint {
        recall_level: recall,
        precision: report.precision.unwrap_or(0.0),
        threshold,
    })
}

/// One sample of the precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub recall_level: f64,
    pub precision: f64,
    pub threshold: f64,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    if grid[0] <= 0.0 || grid[grid.len() - 1] > 1.0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("recall grid must be strictly increasing within (0, 1]"));
    }
    Ok(())
}

/// Precision at each recall level of `grid`, sorted by recall.
pub fn pr_curve(scores: &[f64], labels: &[i8], grid: &[f64]) -> Result<Vec<PRPoint>> {
    check_grid(grid)?;
    grid.iter()
        .map(|&c| recall_operating_point(scores, labels, c))
        .collect()
}

/// Right-endpoint Riemann sum of precision over the recall grid, with the
/// first cell starting at recall 0.
pub fn pr_auc(scores: &[f64], labels: &[i8], grid: &[f64]) -> Result<f64> {
    let curve = pr_curve(scores, labels, grid)?;
    let mut prev = 0.0;
    let mut area = 0.0;
    for p in curve {
        area += p.precision * (p.recall_level - prev);
        prev = p.recall_level;
    }
    Ok(area)
}

/// `m` equally spaced recall levels `1/m, 2/m, …, 1`.
pub fn uniform_recall_grid(cells: usize) -> Vec<f64> {
    (1..=cells).map(|i| i as f64 / cells as f64).collect()
}

/// Ranks `scores` descending; used by top-k checks.
pub fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order = ascending_order(scores);
    order.reverse();
    order
}
