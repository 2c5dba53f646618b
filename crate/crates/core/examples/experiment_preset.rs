//! Run a bundled experiment preset with fewer repetitions and print the summary.
//!
//! `cargo run --release --example experiment_preset -- ionosphere 5`

use quantile_surrogate::experiment::{run_experiment, ExperimentConfig};

fn main() -> quantile_surrogate::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "synthetic".into());
    let mut config = ExperimentConfig::preset(&name)?;
    if let Some(r) = args.next() {
        config.repetitions = r.parse().expect("repetitions must be an integer");
    }
    let record = run_experiment(&config, 1)?;
    print!("{}", record.summary_csv()?);
    Ok(())
}
