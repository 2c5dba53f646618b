//! Surrogate loss values and gradients for the main objectives.

use quantile_surrogate::data::{generate_synthetic, SyntheticSpec};
use quantile_surrogate::{loss_gradient, surrogate_loss, LinearModel, QuantileEstimatorSpec, SurrogateLossSpec};

fn main() -> quantile_surrogate::Result<()> {
    let ds = generate_synthetic(&SyntheticSpec { n: 1000, seed: 3, ..Default::default() })?;
    let model = LinearModel::new(vec![1.0, 0.5]);
    let est = QuantileEstimatorSpec::kernel(0.05);
    let specs = [
        ("precision at recall 0.8", SurrogateLossSpec::precision_at_recall(0.8, est)?),
        ("precision at 10% (false positives)", SurrogateLossSpec::precision_at_rate(0.1, est)?),
        ("precision at 10% (true positives)", SurrogateLossSpec::precision_at_rate_tp(0.1, est)?),
    ];
    for (name, spec) in specs {
        let loss = surrogate_loss(&model, &ds, &spec)?;
        let grad = loss_gradient(&model, &ds, &spec)?;
        println!("{name:<36} loss {:>9.3}  gradient {:?}", loss.value, grad.entries());
    }
    Ok(())
}
