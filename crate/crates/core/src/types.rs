//! Domain records shared across the crate: samples, datasets, linear models,
//! rate constraints, and the estimator, loss and training specifications.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logloss base used when a caller does not pick one. With base 2 the
/// surrogate satisfies `l(0) = 1`, so it upper-bounds the 0/1 step.
pub const DEFAULT_LOGLOSS_BASE: f64 = 2.0;

/// One labeled feature vector. Labels are `-1` or `+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    features: Vec<f64>,
    label: i8,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: i8) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(Error::InvalidLabel(label as i64));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample features"));
        }
        Ok(Self { features, label })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self) -> i8 {
        self.label
    }

    pub fn is_positive(&self) -> bool {
        self.label > 0
    }
}

/// A nonempty collection of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    samples: Vec<Sample>,
    dimension: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyInput)?;
        let dimension = first.features.len();
        if dimension == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        if let Some(bad) = samples.iter().find(|s| s.features.len() != dimension) {
            return Err(Error::Dimension {
                expected: dimension,
                found: bad.features.len(),
            });
        }
        Ok(Self { samples, dimension })
    }

    /// Builds a dataset from parallel feature rows and labels.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: &[i8]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let samples = rows
            .into_iter()
            .zip(labels)
            .map(|(x, &y)| Sample::new(x, y))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, index: usize) -> &Sample {
        &self.samples[index]
    }

    pub fn labels(&self) -> Vec<i8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        self.indices_where(|s| s.is_positive())
    }

    pub fn negative_indices(&self) -> Vec<usize> {
        self.indices_where(|s| !s.is_positive())
    }

    pub fn count_positives(&self) -> usize {
        self.samples.iter().filter(|s| s.is_positive()).count()
    }

    fn indices_where(&self, pred: impl Fn(&Sample) -> bool) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| pred(s))
            .map(|(i, _)| i)
            .collect()
    }

    /// Copies the samples at `indices`, in that order, into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut samples = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = self
                .samples
                .get(i)
                .ok_or_else(|| Error::invalid(format!("index {i} out of range")))?;
            samples.push(s.clone());
        }
        Self::new(samples)
    }

    /// Applies `f` to every feature vector, keeping labels.
    pub fn map_features(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample::new(f(&s.features), s.label))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }
}

impl<'de> Deserialize<'de> for Dataset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            samples: Vec<Sample>,
        }
        let raw = Raw::deserialize(d)?;
        let samples = raw
            .samples
            .into_iter()
            .map(|s| Sample::new(s.features, s.label))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Dataset::new(samples).map_err(serde::de::Error::custom)
    }
}

/// Linear scoring function `f(x) = w·x` with an optional decision threshold.
/// There is no bias term; it is absorbed into the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub threshold: Option<f64>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>) -> Self {
        Self {
            weights,
            threshold: None,
        }
    }

    pub fn zeros(dimension: usize) -> Self {
        Self::new(vec![0.0; dimension])
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, sample: &Sample) -> Result<f64> {
        if sample.features.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                found: sample.features.len(),
            });
        }
        Ok(dot(&self.weights, &sample.features))
    }

    /// `+1` iff the score is strictly above the threshold.
    pub fn predict(&self, sample: &Sample) -> Result<i8> {
        let threshold = self.threshold.ok_or(Error::Uncalibrated)?;
        Ok(if self.score(sample)? > threshold { 1 } else { -1 })
    }

    pub fn scores(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        if dataset.dimension() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                found: dataset.dimension(),
            });
        }
        Ok(dataset
            .samples()
            .iter()
            .map(|s| dot(&self.weights, &s.features))
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model weights"));
        }
        if self.threshold.is_some_and(|t| !t.is_finite()) {
            return Err(Error::NonFinite("model threshold"));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which samples a rate constraint counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    Positives,
    Negatives,
    Indices(Vec<usize>),
}

impl Subset {
    /// Resolves the selector against a dataset. Explicit index lists must be
    /// unique and in range.
    pub fn resolve(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        match self {
            Subset::All => Ok((0..dataset.len()).collect()),
            Subset::Positives => Ok(dataset.positive_indices()),
            Subset::Negatives => Ok(dataset.negative_indices()),
            Subset::Indices(idx) => {
                let mut seen = vec![false; dataset.len()];
                for &i in idx {
                    if i >= dataset.len() {
                        return Err(Error::invalid(format!(
                            "subset index {i} out of range for {} samples",
                            dataset.len()
                        )));
                    }
                    if std::mem::replace(&mut seen[i], true) {
                        return Err(Error::invalid(format!("duplicate subset index {i}")));
                    }
                }
                Ok(idx.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AtLeast,
    AtMost,
}

/// `r_A(f, θ) ≥ c` or `r_A(f, θ) ≤ c` on the subset `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConstraint {
    pub subset: Subset,
    pub direction: Direction,
    pub target: f64,
}

impl RateConstraint {
    pub fn new(subset: Subset, direction: Direction, target: f64) -> Result<Self> {
        let c = Self {
            subset,
            direction,
            target,
        };
        c.validate()?;
        Ok(c)
    }

    /// Recall constraint: rate on the positives at least `c`.
    pub fn recall_at_least(c: f64) -> Result<Self> {
        Self::new(Subset::Positives, Direction::AtLeast, c)
    }

    /// Predicted-positive-rate constraint on all samples.
    pub fn predicted_rate_at_least(c: f64) -> Result<Self> {
        Self::new(Subset::All, Direction::AtLeast, c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target) {
            return Err(Error::invalid(format!(
                "rate target must lie in [0, 1], got {}",
                self.target
            )));
        }
        if let Subset::Indices(idx) = &self.subset {
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid("duplicate index in constraint subset"));
            }
        }
        Ok(())
    }
}

fn default_true() -> bool {
    true
}

/// Quantile estimator choice. All variants are L-estimators: a weighted
/// average of the order statistics of the score sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantileEstimatorSpec {
    /// The order statistic picked by the empirical quantile rule.
    Point,
    /// Gaussian kernel weights over ranks with bandwidth `bandwidth`.
    /// `normalize` rescales the weights to sum to one; `paper_exact`
    /// divides by the sample size instead and takes precedence.
    Kernel {
        bandwidth: f64,
        #[serde(default = "default_true")]
        normalize: bool,
        #[serde(default)]
        paper_exact: bool,
    },
    /// Mean of the bottom-k scores, a lower bound on the point estimate.
    LowerMean,
    /// Mean of the order statistics in the rank window `(n·lower, n·upper]`.
    Interval { lower: f64, upper: f64 },
}

impl QuantileEstimatorSpec {
    pub fn kernel(bandwidth: f64) -> Self {
        QuantileEstimatorSpec::Kernel {
            bandwidth,
            normalize: true,
            paper_exact: false,
        }
    }

    /// True when the estimate is a convex combination of the scores.
    pub fn is_normalized(&self) -> bool {
        match *self {
            QuantileEstimatorSpec::Kernel {
                normalize,
                paper_exact,
                ..
            } => normalize && !paper_exact,
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QuantileEstimatorSpec::Kernel { bandwidth, .. } => {
                if bandwidth.is_nan() || bandwidth <= 0.0 {
                    return Err(Error::NonpositiveScale(bandwidth));
                }
            }
            QuantileEstimatorSpec::Interval { lower, upper } => {
                if !(0.0 < lower && lower < upper && upper < 1.0) {
                    return Err(Error::invalid(format!(
                        "interval bounds need 0 < k1 < k2 < 1, got ({lower}, {upper})"
                    )));
                }
            }
            QuantileEstimatorSpec::Point | QuantileEstimatorSpec::LowerMean => {}
        }
        Ok(())
    }
}

/// Which side of the data a generic rate loss sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenalizedSide {
    /// `Σ_{y=-1} l(f(x) - θ)`: bounds the false positives.
    Negatives,
    /// `Σ_{y=+1} l(θ - f(x))`: bounds the missed positives.
    Positives,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Precision at a recall target; the constraint is on the positives.
    PrecisionAtRecall,
    /// Precision at a predicted positive rate, false-positive form.
    PrecisionAtRateFp,
    /// Precision at a predicted positive rate, true-positive form.
    PrecisionAtRateTp,
    /// Any rate constraint with a caller-chosen penalized side. The caller
    /// is responsible for the loss being monotone in the threshold.
    Generic { side: PenalizedSide },
}

/// A quantile surrogate loss: the threshold is replaced by an estimate of
/// the constraint subset's score quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateLossSpec {
    pub objective: Objective,
    pub constraint: RateConstraint,
    pub estimator: QuantileEstimatorSpec,
    #[serde(default = "default_base")]
    pub logloss_base: f64,
}

fn default_base() -> f64 {
    DEFAULT_LOGLOSS_BASE
}

impl SurrogateLossSpec {
    pub fn precision_at_recall(recall: f64, estimator: QuantileEstimatorSpec) -> Result<Self> {
        Self::new(
            Objective::PrecisionAtRecall,
            RateConstraint::recall_at_least(recall)?,
            estimator,
        )
    }

    pub fn precision_at_rate(rate: f64, estimator: QuantileEstimatorSpec) -> Result<Self> {
        Self::new(
            Objective::PrecisionAtRateFp,
            RateConstraint::predicted_rate_at_least(rate)?,
            estimator,
        )
    }

    pub fn precision_at_rate_tp(rate: f64, estimator: QuantileEstimatorSpec) -> Result<Self> {
        Self::new(
            Objective::PrecisionAtRateTp,
            RateConstraint::predicted_rate_at_least(rate)?,
            estimator,
        )
    }

    pub fn new(
        objective: Objective,
        constraint: RateConstraint,
        estimator: QuantileEstimatorSpec,
    ) -> Result<Self> {
        let spec = Self {
            objective,
            constraint,
            estimator,
            logloss_base: DEFAULT_LOGLOSS_BASE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_base(mut self, base: f64) -> Result<Self> {
        self.logloss_base = base;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.constraint.validate()?;
        self.estimator.validate()?;
        if !(self.logloss_base > 1.0) || !self.logloss_base.is_finite() {
            return Err(Error::invalid(format!(
                "logloss base must be > 1, got {}",
                self.logloss_base
            )));
        }
        let c = self.constraint.target;
        match self.objective {
            Objective::PrecisionAtRecall => {
                if self.constraint.subset != Subset::Positives
                    || self.constraint.direction != Direction::AtLeast
                {
                    return Err(Error::invalid(
                        "precision-at-recall needs an at-least constraint on the positives",
                    ));
                }
                if !(c > 0.0 && c <= 1.0) {
                    return Err(Error::invalid(format!("target recall must lie in (0, 1], got {c}")));
                }
            }
            Objective::PrecisionAtRateFp | Objective::PrecisionAtRateTp => {
                if self.constraint.subset != Subset::All {
                    return Err(Error::invalid(
                        "precision-at-rate needs a constraint on all samples",
                    ));
                }
                if !(c > 0.0 && c < 1.0) {
                    return Err(Error::invalid(format!(
                        "target predicted positive rate must lie in (0, 1), got {c}"
                    )));
                }
            }
            Objective::Generic { .. } => {}
        }
        Ok(())
    }
}

/// Minibatch size: a fixed count or the whole set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    #[default]
    Constant,
    /// `γ_t = γ / √t`, with `t` counted from 1.
    InverseSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: BatchSize,
    /// `Full` uses the constraint members of the main minibatch; a size
    /// draws an independent minibatch from the constraint subset.
    pub constraint_batch_size: BatchSize,
    pub steps: usize,
    pub restarts: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub schedule: StepSchedule,
    /// Steps between full-dataset loss evaluations recorded in the trace.
    pub trace_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: BatchSize::Full,
            constraint_batch_size: BatchSize::Full,
            steps: 1000,
            restarts: 1,
            seed: 0,
            init_scale: 0.01,
            schedule: StepSchedule::Constant,
            trace_interval: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return bad(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        if matches!(self.batch_size, BatchSize::Size(0))
            || matches!(self.constraint_batch_size, BatchSize::Size(0))
        {
            return bad("batch sizes must be positive".into());
        }
        if self.steps == 0 || self.restarts == 0 || self.trace_interval == 0 {
            return bad("steps, restarts and trace_interval must be positive".into());
        }
        if !(self.init_scale > 0.0) || !self.init_scale.is_finite() {
            return bad(format!("init scale must be > 0, got {}", self.init_scale));
        }
        Ok(())
    }
}

/// Exact confusion counts at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Absent when nothing is predicted positive.
    pub precision: Option<f64>,
    pub recall: f64,
    /// Fraction of all samples predicted positive.
    pub rate: f64,
    pub threshold: f64,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}
