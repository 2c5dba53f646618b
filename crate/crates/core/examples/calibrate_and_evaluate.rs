//! Threshold calibration, precision at a rate, and a PR curve.

use quantile_surrogate::metrics::{
    calibrate_threshold, confusion, pr_auc, pr_curve, precision_at_rate, rate, uniform_recall_grid,
};
use quantile_surrogate::Direction;

fn main() -> quantile_surrogate::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.7, 0.55, 0.5, 0.4, 0.3, 0.2, 0.1];
    let labels = [1, 1, -1, 1, -1, 1, -1, -1, 1, -1];

    for target in [0.2, 0.3, 0.5] {
        let theta = calibrate_threshold(&scores, Direction::AtLeast, target)?;
        println!("rate >= {target}: threshold {theta}, realized {}", rate(&scores, theta)?);
    }
    let theta = calibrate_threshold(&scores, Direction::AtMost, 0.3)?;
    println!("rate <= 0.3: threshold {theta}, realized {}", rate(&scores, theta)?);

    println!("{:?}", confusion(&scores, &labels, 0.6)?);
    println!("precision at 30%: {:.3}", precision_at_rate(&scores, &labels, 0.3)?);

    let grid = uniform_recall_grid(5);
    for p in pr_curve(&scores, &labels, &grid)? {
        println!("recall {:.1}: precision {:.3} at threshold {}", p.recall_level, p.precision, p.threshold);
    }
    println!("PR-AUC over 5 cells: {:.3}", pr_auc(&scores, &labels, &grid)?);
    Ok(())
}
