//! Calibration schemes side by side: random-only captures against two random
//! captures followed by planned ones, averaged over paired trials.
//!
//! `cargo run --release --example scheme_comparison -- [trials]`

use calibguide::simharness::{compare_strategies, ExperimentConfig};

fn main() -> calibguide::Result<()> {
    let mut cfg = ExperimentConfig {
        trials: 20,
        ..Default::default()
    };
    if let Some(t) = std::env::args().nth(1) {
        cfg.trials = t.parse().expect("trials");
    }
    cfg.search.jacobian.full_chain = true;
    let report = compare_strategies(&cfg)?;
    print!("{}", report.to_csv());
    Ok(())
}
