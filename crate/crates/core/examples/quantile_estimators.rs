//! The four quantile estimators on one score set.

use quantile_surrogate::quantile::estimate;
use quantile_surrogate::QuantileEstimatorSpec;

fn main() -> quantile_surrogate::Result<()> {
    let scores = [0.3, -1.2, 2.5, 0.9, 0.0, 1.7, -0.4, 0.6, 1.1, -2.0];
    let level = 0.7;
    let estimators = [
        ("point", QuantileEstimatorSpec::Point),
        ("kernel h=0.05", QuantileEstimatorSpec::kernel(0.05)),
        ("kernel h=0.3", QuantileEstimatorSpec::kernel(0.3)),
        ("lower mean", QuantileEstimatorSpec::LowerMean),
        ("interval 0.25..0.75", QuantileEstimatorSpec::Interval { lower: 0.25, upper: 0.75 }),
    ];
    println!("scores {scores:?}, level {level}");
    for (name, spec) in estimators {
        let q = estimate(&spec, &scores, level)?;
        let weights: Vec<String> = q.weights.iter().map(|w| format!("{w:.2}")).collect();
        println!("{name:<20} {:>7.4}  weights [{}]", q.value, weights.join(" "));
    }
    Ok(())
}
