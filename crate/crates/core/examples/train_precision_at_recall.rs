//! Train for precision at recall 0.9 with restarts, then evaluate on fresh data.

use quantile_surrogate::data::{generate_synthetic, SyntheticSpec};
use quantile_surrogate::metrics::{calibrate_model, evaluate, precision_at_recall};
use quantile_surrogate::optim::multi_restart_train;
use quantile_surrogate::{BatchSize, QuantileEstimatorSpec, SurrogateLossSpec, TrainConfig};

fn main() -> quantile_surrogate::Result<()> {
    let train = generate_synthetic(&SyntheticSpec { n: 5000, seed: 1, ..Default::default() })?;
    let test = generate_synthetic(&SyntheticSpec { n: 5000, seed: 2, ..Default::default() })?;

    let spec = SurrogateLossSpec::precision_at_recall(0.9, QuantileEstimatorSpec::kernel(0.05))?;
    let config = TrainConfig {
        steps: 1500,
        restarts: 3,
        batch_size: BatchSize::Size(256),
        seed: 7,
        ..Default::default()
    };
    let fit = multi_restart_train(&train, &spec, &config)?;
    println!("best restart {} (seed {}), train loss {:.2}", fit.restart_index, fit.seed_used, fit.final_train_loss);

    let threshold = calibrate_model(&fit.model, &train, &spec.constraint)?;
    let model = fit.model.with_threshold(threshold);
    let report = evaluate(&model, &test)?;
    println!("test at the training threshold: {report:?}");

    let scores = model.scores(&test)?;
    println!("test precision at recall 0.9: {:.3}", precision_at_recall(&scores, &test.labels(), 0.9)?);
    Ok(())
}
