//! Random versus planned capture on the reference rig.
//!
//! `cargo run --release --example convergence_study -- [trials] [sigma...]`

use std::time::Instant;

use calibguide::simharness::{run_convergence, ExperimentConfig, Strategy};

fn main() -> calibguide::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig {
        trials: 10,
        noise_sigmas: vec![1.0],
        ..Default::default()
    };
    if let Some(t) = args.first() {
        cfg.trials = t.parse().expect("trials");
    }
    if args.len() > 1 {
        cfg.noise_sigmas = args[1..]
            .iter()
            .map(|s| s.parse().expect("sigma"))
            .collect();
    }
    cfg.search.jacobian.full_chain = true;
    let start = Instant::now();
    let report = run_convergence(&cfg)?;
    println!("{} trials in {:.1?}", cfg.trials, start.elapsed());
    println!("sigma  images  random(deg, %)          optimal(deg, %)");
    for &sigma in &cfg.noise_sigmas {
        for images in [2, 4, 6, 10, 14, 20] {
            let r = report.row(Strategy::Random, sigma, images).unwrap();
            let o = report.row(Strategy::Optimal, sigma, images).unwrap();
            println!(
                "{sigma:5.1}  {images:6}  {:8.4} {:8.4}       {:8.4} {:8.4}",
                r.rotation_mean, r.translation_mean, o.rotation_mean, o.translation_mean
            );
        }
    }
    Ok(())
}
