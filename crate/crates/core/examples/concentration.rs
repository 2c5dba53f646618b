//! Subsampling experiments: estimator stability and loss deviation.

use quantile_surrogate::concentration::{
    estimator_stability, loss_uniform_deviation, ScoreLaw, StabilitySpec, UniformDeviationSpec,
};
use quantile_surrogate::data::{generate_synthetic, SyntheticSpec};
use quantile_surrogate::{QuantileEstimatorSpec, SurrogateLossSpec};

fn main() -> quantile_surrogate::Result<()> {
    let report = estimator_stability(&StabilitySpec {
        population: 20_000,
        batch_sizes: (0..7).map(|i| 50 << i).collect(),
        trials: 200,
        estimator: QuantileEstimatorSpec::kernel(0.05),
        level: 0.5,
        score_law: ScoreLaw::Uniform,
        seed: 0,
    })?;
    println!("kernel estimator, slope {:?}", report.fitted_slope);
    for (b, dev) in report.batch_sizes.iter().zip(&report.mean_abs_dev) {
        println!("  b {b:>5}: mean |dev| {dev:.2e}");
    }

    let ds = generate_synthetic(&SyntheticSpec { n: 4000, seed: 1, ..Default::default() })?;
    let report = loss_uniform_deviation(&ds, &UniformDeviationSpec {
        loss: SurrogateLossSpec::precision_at_rate(0.1, QuantileEstimatorSpec::LowerMean)?,
        batch_sizes: vec![50, 200, 800],
        trials: 50,
        w_norm_bound: 5.0,
        n_models: 20,
        seed: 0,
    })?;
    println!("lower-mean loss deviation, slope {:?}", report.fitted_slope);
    Ok(())
}
