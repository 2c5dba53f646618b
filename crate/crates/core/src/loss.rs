//! Quantile surrogate losses and their gradients for linear models.
//!
//! Each loss replaces the decision threshold with a quantile estimate of
//! the constraint subset's scores and sums a logistic upper bound of the
//! error count over one side of the data. Gradients treat the sort
//! permutation as fixed, so they flow through the score values only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::{estimate, QuantileResult};
use crate::types::{
    dot, Dataset, LinearModel, Objective, PenalizedSide, QuantileEstimatorSpec,
    RateConstraint, SurrogateLossSpec, DEFAULT_LOGLOSS_BASE,
};

/// `log_base(1 + e^z)`, evaluated without overflow.
pub fn logloss(z: f64, base: f64) -> f64 {
    softplus(z) / base.ln()
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A surrogate loss value. `per_sample` holds one summand per penalized
/// sample when requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub per_sample: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Resolved index sets for one loss on one dataset.
#[derive(Debug, Clone)]
pub(crate) struct LossPlan {
    pub penalized: Vec<usize>,
    pub constraint: Vec<usize>,
    /// `+1` when negatives are penalized (`l(f - θ)`), `-1` for positives.
    pub sign: f64,
    pub level: f64,
    pub estimator: QuantileEstimatorSpec,
    pub base: f64,
}

impl LossPlan {
    pub fn new(spec: &SurrogateLossSpec, dataset: &Dataset) -> Result<Self> {
        spec.validate()?;
        let side = match spec.objective {
            Objective::PrecisionAtRecall | Objective::PrecisionAtRateFp => PenalizedSide::Negatives,
            Objective::PrecisionAtRateTp => PenalizedSide::Positives,
            Objective::Generic { side } => side,
        };
        Self::build(dataset, &spec.constraint, spec.estimator, side, spec.logloss_base)
    }

    fn build(
        dataset: &Dataset,
        constraint: &RateConstraint,
        estimator: QuantileEstimatorSpec,
        side: PenalizedSide,
        base: f64,
    ) -> Result<Self> {
        constraint.validate()?;
        estimator.validate()?;
        let constraint_idx = constraint.subset.resolve(dataset)?;
        if constraint_idx.is_empty() {
            return Err(Error::NoConstraintSubset);
        }
        let (penalized, sign) = match side {
            PenalizedSide::Negatives => (dataset.negative_indices(), 1.0),
            PenalizedSide::Positives => (dataset.positive_indices(), -1.0),
        };
        if penalized.is_empty() {
            return Err(Error::EmptyObjective);
        }
        // Both directions use the upper (1 - c) quantile: it is the largest
        // feasible threshold for `≥ c` and the smallest for `≤ c`.
        let level = 1.0 - constraint.target;
        Ok(Self {
            penalized,
            constraint: constraint_idx,
            sign,
            level,
            estimator,
            base,
        })
    }

    /// Threshold estimate over `constraint` given precomputed `scores`.
    pub fn threshold(&self, scores: &[f64], constraint: &[usize]) -> Result<QuantileResult> {
        let sub: Vec<f64> = constraint.iter().map(|&i| scores[i]).collect();
        estimate(&self.estimator, &sub, self.level)
    }

    /// Summed loss over `penalized` at threshold `theta`.
    pub fn value(&self, scores: &[f64], penalized: &[usize], theta: f64) -> f64 {
        penalized
            .iter()
            .map(|&i| logloss(self.sign * (scores[i] - theta), self.base))
            .sum()
    }

    /// Loss and gradient restricted to the given index sets. The returned
    /// gradient is of the summed loss over `penalized`.
    pub fn value_and_gradient(
        &self,
        weights: &[f64],
        dataset: &Dataset,
        penalized: &[usize],
        constraint: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        let d = dataset.dimension();
        let mut scores = vec![0.0; dataset.len()];
        for &i in penalized.iter().chain(constraint) {
            scores[i] = dot(weights, dataset.sample(i).features());
        }
        let q = self.threshold(&scores, constraint)?;
        let theta = q.value;

        let mut anchor = vec![0.0; d];
        for &j in &q.support {
            let w = q.weights[j];
            for (a, x) in anchor.iter_mut().zip(dataset.sample(constraint[j]).features()) {
                *a += w * x;
            }
        }
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut slope_total = 0.0;
        let ln_base = self.base.ln();
        for &i in penalized {
            let z = self.sign * (scores[i] - theta);
            value += softplus(z) / ln_base;
            let a = sigmoid(z) * self.sign / ln_base;
            slope_total += a;
            for (g, x) in grad.iter_mut().zip(dataset.sample(i).features()) {
                *g += a * x;
            }
        }
        for (g, a) in grad.iter_mut().zip(&anchor) {
            *g -= slope_total * a;
        }
        Ok((value, grad))
    }
}

fn loss_with_plan(model: &LinearModel, dataset: &Dataset, plan: &LossPlan) -> Result<LossValue> {
    let scores = model.scores(dataset)?;
    let q = plan.threshold(&scores, &plan.constraint)?;
    let per_sample: Vec<f64> = plan
        .penalized
        .iter()
        .map(|&i| logloss(plan.sign * (scores[i] - q.value), plan.base))
        .collect();
    Ok(LossValue {
        value: per_sample.iter().sum(),
        per_sample: Some(per_sample),
    })
}

/// Precision-at-recall surrogate:
/// `Σ_{y=-1} l(f(x) - q̂(f(X⁺), 1 - c))`.
pub fn p_at_r_loss(
    model: &LinearModel,
    dataset: &Dataset,
    recall: f64,
    estimator: &QuantileEstimatorSpec,
) -> Result<LossValue> {
    if !(recall > 0.0 && recall <= 1.0) {
        return Err(Error::invalid(format!("target recall must lie in (0, 1], got {recall}")));
    }
    let constraint = RateConstraint::recall_at_least(recall)?;
    let plan = LossPlan::build(
        dataset,
        &constraint,
        *estimator,
        PenalizedSide::Negatives,
        DEFAULT_LOGLOSS_BASE,
    )?;
    loss_with_plan(model, dataset, &plan)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::invalid(format!(
            "target predicted positive rate must lie in (0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Precision-at-rate surrogate, false-positive form:
/// `Σ_{y=-1} l(f(x) - q̂(f(X), 1 - c))`.
pub fn p_at_ppr_fp_loss(
    model: &LinearModel,
    dataset: &Dataset,
    rate: f64,
    estimator: &QuantileEstimatorSpec,
) -> Result<LossValue> {
    check_rate(rate)?;
    let constraint = RateConstraint::predicted_rate_at_least(rate)?;
    let plan = LossPlan::build(
        dataset,
        &constraint,
        *estimator,
        PenalizedSide::Negatives,
        DEFAULT_LOGLOSS_BASE,
    )?;
    loss_with_plan(model, dataset, &plan)
}

/// Precision-at-rate surrogate, true-positive form:
/// `Σ_{y=+1} l(q̂(f(X), 1 - c) - f(x))`.
pub fn p_at_ppr_tp_loss(
    model: &LinearModel,
    dataset: &Dataset,
    rate: f64,
    estimator: &QuantileEstimatorSpec,
) -> Result<LossValue> {
    check_rate(rate)?;
    let constraint = RateConstraint::predicted_rate_at_least(rate)?;
    let plan = LossPlan::build(
        dataset,
        &constraint,
        *estimator,
        PenalizedSide::Positives,
        DEFAULT_LOGLOSS_BASE,
    )?;
    loss_with_plan(model, dataset, &plan)
}

/// Surrogate for an arbitrary rate constraint.
pub fn generic_rate_loss(
    model: &LinearModel,
    dataset: &Dataset,
    constraint: &RateConstraint,
    estimator: &QuantileEstimatorSpec,
    side: PenalizedSide,
) -> Result<LossValue> {
    let plan = LossPlan::build(dataset, constraint, *estimator, side, DEFAULT_LOGLOSS_BASE)?;
    loss_with_plan(model, dataset, &plan)
}

/// Evaluates the loss described by `spec`.
pub fn surrogate_loss(
    model: &LinearModel,
    dataset: &Dataset,
    spec: &SurrogateLossSpec,
) -> Result<LossValue> {
    let plan = LossPlan::new(spec, dataset)?;
    loss_with_plan(model, dataset, &plan)
}

/// Gradient of [`surrogate_loss`] with respect to the model weights.
///
/// For penalized samples `P` with sign `s` this is
/// `Σ_{i∈P} σ(s(f_i - θ)) s (x_i - x̂) / ln(base)`, where `x̂` is the
/// estimator-weighted average of the constraint samples.
pub fn loss_gradient(
    model: &LinearModel,
    dataset: &Dataset,
    spec: &SurrogateLossSpec,
) -> Result<GradientVector> {
    if model.dimension() != dataset.dimension() {
        return Err(Error::Dimension {
            expected: model.dimension(),
            found: dataset.dimension(),
        });
    }
    let plan = LossPlan::new(spec, dataset)?;
    let (_, grad) = plan.value_and_gradient(&model.weights, dataset, &plan.penalized, &plan.constraint)?;
    Ok(GradientVector(grad))
}

/// Checks that `spec` can be evaluated on `dataset` (nonempty constraint
/// subset and penalized side).
pub fn check_compatible(spec: &SurrogateLossSpec, dataset: &Dataset) -> Result<()> {
    LossPlan::new(spec, dataset).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Direction, Subset};
    use approx::assert_abs_diff_eq;

    fn ds(rows: &[(&[f64], i8)]) -> Dataset {
        let (x, y): (Vec<Vec<f64>>, Vec<i8>) = rows.iter().map(|(x, y)| (x.to_vec(), *y)).unzip();
        Dataset::from_rows(x, &y).unwrap()
    }

    #[test]
    fn logloss_examples() {
        assert_eq!(logloss(0.0, 2.0), 1.0);
        assert_abs_diff_eq!(logloss(-1000.0, 2.0), 0.0, epsilon = 1e-12);
        let big = logloss(1000.0, 2.0);
        assert!((big - 1000.0 / 2f64.ln()).abs() <= 1e-9 * big);
        assert_abs_diff_eq!(logloss(1.0, std::f64::consts::E), (1.0 + 1f64.exp()).ln(), epsilon = 1e-15);
    }

    #[test]
    fn p_at_r_single_negative_at_threshold() {
        // One positive at score 2, one negative at score 2.
        let d = ds(&[(&[2.0], 1), (&[2.0], -1)]);
        let m = LinearModel::new(vec![1.0]);
        let l = p_at_r_loss(&m, &d, 1.0, &QuantileEstimatorSpec::Point).unwrap();
        assert_eq!(l.value, 1.0);
    }

    #[test]
    fn p_at_r_saturated() {
        let d = ds(&[(&[100.0], 1), (&[101.0], 1), (&[40.0], -1), (&[10.0], -1)]);
        let m = LinearModel::new(vec![1.0]);
        let l = p_at_r_loss(&m, &d, 0.5, &QuantileEstimatorSpec::Point).unwrap();
        assert!(l.value <= 1e-10);
    }

    #[test]
    fn p_at_r_hand_computation() {
        // Positives score {0.3, 1.1, 2.0}; recall 0.5 -> level 0.5, k = 1,
        // threshold 0.3. Negatives score {0.1, 0.8, 1.5}.
        let d = ds(&[
            (&[1.1], 1),
            (&[0.1], -1),
            (&[2.0], 1),
            (&[0.8], -1),
            (&[0.3], 1),
            (&[1.5], -1),
        ]);
        let m = LinearModel::new(vec![1.0]);
        let l = p_at_r_loss(&m, &d, 0.5, &QuantileEstimatorSpec::Point).unwrap();
        let oracle: f64 = [0.1f64, 0.8, 1.5]
            .iter()
            .map(|s| (1.0 + (s - 0.3f64).exp()).log2())
            .sum();
        assert_abs_diff_eq!(l.value, oracle, epsilon = 1e-12);
        assert_eq!(l.per_sample.unwrap().len(), 3);
    }

    #[test]
    fn p_at_r_errors() {
        let m = LinearModel::new(vec![1.0]);
        let only_neg = ds(&[(&[1.0], -1)]);
        assert!(matches!(
            p_at_r_loss(&m, &only_neg, 0.5, &QuantileEstimatorSpec::Point),
            Err(Error::NoConstraintSubset)
        ));
        let only_pos = ds(&[(&[1.0], 1)]);
        assert!(matches!(
            p_at_r_loss(&m, &only_pos, 0.5, &QuantileEstimatorSpec::Point),
            Err(Error::EmptyObjective)
        ));
    }

    #[test]
    fn ppr_fp_examples() {
        let m = LinearModel::new(vec![1.0]);
        let tied = ds(&[(&[3.0], 1), (&[3.0], -1), (&[3.0], 1)]);
        let l = p_at_ppr_fp_loss(&m, &tied, 0.5, &QuantileEstimatorSpec::Point).unwrap();
        assert_eq!(l.value, 1.0);

        // A narrow window puts the threshold on the top negative, costing
        // l(0) = 1; a wide one moves it into the class gap.
        let separable = ds(&[(&[50.0], 1), (&[51.0], 1), (&[-50.0], -1), (&[-60.0], -1)]);
        let narrow = p_at_ppr_fp_loss(&m, &separable, 0.5, &QuantileEstimatorSpec::kernel(0.05)).unwrap();
        assert_abs_diff_eq!(narrow.value, 1.0, epsilon = 1e-3);
        let wide = p_at_ppr_fp_loss(&m, &separable, 0.5, &QuantileEstimatorSpec::kernel(1.0)).unwrap();
        assert!(wide.value < 1e-10, "{}", wide.value);
    }

    #[test]
    fn ppr_fp_lower_mean_brute_force() {
        let scores = [0.9, -0.4, 1.7, 0.2, -1.3, 0.6, 2.4, -0.1];
        let labels = [1, -1, 1, -1, -1, 1, 1, -1];
        let rows: Vec<(&[f64], i8)> = scores.iter().zip(labels).map(|(s, y)| (std::slice::from_ref(s), y)).collect();
        let d = ds(&rows);
        let m = LinearModel::new(vec![1.0]);
        let l = p_at_ppr_fp_loss(&m, &d, 0.25, &QuantileEstimatorSpec::LowerMean).unwrap();
        // level 0.75 over 8 scores -> k = 6: mean of the six smallest.
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let theta: f64 = sorted[..6].iter().sum::<f64>() / 6.0;
        let oracle: f64 = scores
            .iter()
            .zip(labels)
            .filter(|(_, y)| *y == -1)
            .map(|(s, _)| (1.0 + (s - theta).exp()).log2())
            .sum();
        assert_abs_diff_eq!(l.value, oracle, epsilon = 1e-12);
    }

    #[test]
    fn ppr_tp_examples() {
        let m = LinearModel::new(vec![1.0]);
        let d = ds(&[(&[1.0], 1), (&[1.0], -1)]);
        let l = p_at_ppr_tp_loss(&m, &d, 0.5, &QuantileEstimatorSpec::Point).unwrap();
        assert_eq!(l.value, 1.0);
        let d = ds(&[(&[100.0], 1), (&[0.0], -1), (&[0.5], -1), (&[101.0], 1)]);
        let l = p_at_ppr_tp_loss(&m, &d, 0.5, &QuantileEstimatorSpec::Point).unwrap();
        assert!(l.value < 1e-10);
    }

    #[test]
    fn generic_specializations() {
        let d = ds(&[
            (&[1.1, 0.2], 1),
            (&[0.1, -0.5], -1),
            (&[2.0, 0.0], 1),
            (&[0.8, 1.0], -1),
            (&[0.3, 0.4], 1),
            (&[1.5, -0.3], -1),
        ]);
        let m = LinearModel::new(vec![0.7, -0.4]);
        let k = QuantileEstimatorSpec::kernel(0.2);
        let generic = generic_rate_loss(
            &m,
            &d,
            &RateConstraint::recall_at_least(0.6).unwrap(),
            &k,
            PenalizedSide::Negatives,
        )
        .unwrap();
        assert_eq!(generic, p_at_r_loss(&m, &d, 0.6, &k).unwrap());

        let generic = generic_rate_loss(
            &m,
            &d,
            &RateConstraint::predicted_rate_at_least(0.3).unwrap(),
            &k,
            PenalizedSide::Negatives,
        )
        .unwrap();
        assert_eq!(generic, p_at_ppr_fp_loss(&m, &d, 0.3, &k).unwrap());

        // Explicit subset {0, 3, 5}: scores 0.69, 0.16, 1.17; level 1/3 -> k = 1.
        let subset = RateConstraint::new(Subset::Indices(vec![0, 3, 5]), Direction::AtLeast, 2.0 / 3.0).unwrap();
        let l = generic_rate_loss(&m, &d, &subset, &QuantileEstimatorSpec::Point, PenalizedSide::Negatives).unwrap();
        let theta: f64 = 0.8 * 0.7 - 0.4;
        let neg_scores: [f64; 3] = [0.1 * 0.7 + 0.5 * 0.4, theta, 1.5 * 0.7 + 0.3 * 0.4];
        let oracle: f64 = neg_scores.iter().map(|s| (1.0 + (s - theta).exp()).log2()).sum();
        assert_abs_diff_eq!(l.value, oracle, epsilon = 1e-12);
    }

    #[test]
    fn point_gradient_has_anchor_form() {
        let d = ds(&[
            (&[1.0, 0.5], 1),
            (&[0.2, -0.1], -1),
            (&[2.0, 1.0], 1),
            (&[-0.5, 0.3], -1),
            (&[0.7, 0.9], -1),
        ]);
        let m = LinearModel::new(vec![0.4, 0.3]);
        let spec = SurrogateLossSpec::precision_at_recall(1.0, QuantileEstimatorSpec::Point).unwrap();
        let g = loss_gradient(&m, &d, &spec).unwrap();
        // Level 0 -> x̂ is the lowest-scoring positive, (1.0, 0.5).
        let xhat = [1.0, 0.5];
        let theta = 0.4 * 1.0 + 0.3 * 0.5;
        let mut expected = [0.0; 2];
        let mut a_sum = 0.0;
        for x in [[0.2, -0.1], [-0.5, 0.3], [0.7, 0.9]] {
            let a = sigmoid(0.4 * x[0] + 0.3 * x[1] - theta);
            a_sum += a;
            expected[0] += a * x[0];
            expected[1] += a * x[1];
        }
        for k in 0..2 {
            let e = (expected[k] - a_sum * xhat[k]) / 2f64.ln();
            assert_abs_diff_eq!(g.0[k], e, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_gradient_on_symmetric_data() {
        let d = ds(&[(&[1.0, 2.0], 1), (&[-1.0, -2.0], 1), (&[0.5, -1.0], -1), (&[-0.5, 1.0], -1)]);
        let m = LinearModel::zeros(2);
        let spec = SurrogateLossSpec::precision_at_rate(0.5, QuantileEstimatorSpec::LowerMean).unwrap();
        let g = loss_gradient(&m, &d, &spec).unwrap();
        // All scores tie at zero, so the anchor is the mean of the bottom two
        // samples in input order: (0, 0) for this arrangement.
        for v in g.0 {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }
}
