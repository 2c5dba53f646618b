//! Regularized logistic regression with a threshold calibrated to a rate.

use quantile_surrogate::baseline::{baseline_with_threshold, logistic_fit, augment, LogisticConfig};
use quantile_surrogate::data::ionosphere;
use quantile_surrogate::metrics::{confusion, precision_at_rate};
use quantile_surrogate::{Direction, RateConstraint, Subset};

fn main() -> quantile_surrogate::Result<()> {
    let ds = ionosphere();
    let config = LogisticConfig::default();
    let fit = logistic_fit(&augment(&ds)?, 0.01, &config)?;
    println!("objective {:.4}, gradient norm {:.1e}, {} steps", fit.objective, fit.gradient_norm, fit.steps);

    let constraint = RateConstraint::new(Subset::All, Direction::AtLeast, 0.05)?;
    let base = baseline_with_threshold(&ds, &constraint, 0.01, &config)?;
    let scores = base.scores(&ds)?;
    println!("calibrated threshold {:.4}", base.calibrated_threshold);
    println!("{:?}", confusion(&scores, &ds.labels(), base.calibrated_threshold)?);
    println!("precision at 5%: {:.3}", precision_at_rate(&scores, &ds.labels(), 0.05)?);
    Ok(())
}
