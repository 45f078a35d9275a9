//! Averaging per-camera PnP poses against joint stereo bundle adjustment,
//! scored by triangulation error on held-out views.
//!
//! `cargo run --release --example monocular_vs_stereo -- [seeds]`

use calibguide::simharness::{monocular_vs_stereo_trial, ExperimentConfig};

fn main() -> calibguide::Result<()> {
    let seeds: usize = std::env::args()
        .nth(1)
        .map_or(5, |s| s.parse().expect("seeds"));
    let mut cfg = ExperimentConfig::default();
    cfg.search.jacobian.full_chain = true;
    println!("seed  monocular TE (mm)  stereo TE (mm)  monocular rms (px)  stereo rms (px)");
    let (mut mono, mut stereo) = (0.0, 0.0);
    for seed in 0..seeds {
        let c = monocular_vs_stereo_trial(&cfg, 4, seed)?;
        mono += c.monocular_te;
        stereo += c.stereo_te;
        println!(
            "{seed:4}  {:17.3}  {:14.3}  {:18.3}  {:15.3}",
            c.monocular_te, c.stereo_te, c.monocular_rms, c.stereo_rms
        );
    }
    println!(
        "mean  {:17.3}  {:14.3}",
        mono / seeds as f64,
        stereo / seeds as f64
    );
    Ok(())
}
