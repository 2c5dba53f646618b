//! Rate-constrained linear classification with quantile surrogate losses.
//!
//! A rate constraint asks that at least (or at most) a fraction `c` of some
//! subset of the data score above the decision threshold. For a linear
//! scorer that threshold is a quantile of the subset's scores, so the
//! constrained problem becomes an unconstrained one: replace the threshold
//! by a quantile estimate and minimize a log-loss surrogate of the errors
//! that remain. Precision at a fixed recall and precision at a fixed
//! predicted positive rate are the two main instances.
//!
//! ```
//! use quantile_surrogate::{data, metrics, optim, QuantileEstimatorSpec, SurrogateLossSpec, TrainConfig};
//!
//! let train = data::generate_synthetic(&data::SyntheticSpec { n: 500, seed: 1, ..Default::default() })?;
//! let loss = SurrogateLossSpec::precision_at_recall(0.9, QuantileEstimatorSpec::kernel(0.05))?;
//! let fit = optim::gd_train(&train, &loss, &TrainConfig { steps: 200, ..Default::default() })?;
//! let scores = fit.model.scores(&train)?;
//! let p = metrics::precision_at_recall(&scores, &train.labels(), 0.9)?;
//! println!("precision at recall 0.9: {p:.3}");
//! assert!(p > 0.2);
//! # Ok::<(), quantile_surrogate::Error>(())
//! ```
//!
//! Modules, bottom up: [`types`] and [`error`]; [`quantile`] estimators;
//! [`loss`] surrogates and gradients; [`optim`] momentum SGD; [`metrics`]
//! exact evaluation; [`data`] loaders and generators; [`baseline`]
//! logistic regression; [`concentration`] subsampling experiments;
//! [`experiment`] repeated train/test comparisons; [`cli`].

pub mod baseline;
pub mod cli;
pub mod concentration;
pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod quantile;
pub mod types;

pub use error::{Error, Result};
pub use loss::{loss_gradient, surrogate_loss, LossValue};
pub use optim::TrainResult;
pub use quantile::QuantileResult;
pub use types::{
    BatchSize, Dataset, Direction, EvalReport, LinearModel, Objective, PenalizedSide, QuantileEstimatorSpec,
    RateConstraint, Sample, StepSchedule, Subset, SurrogateLossSpec, TrainConfig,
};
