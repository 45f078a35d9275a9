//! Adds random board views one at a time and reports the relative-pose
//! covariance after each, under both Jacobian modes.
//!
//! `cargo run --example covariance_trace -- [views] [seed]`

use calibguide::covariance::relative_covariance;
use calibguide::jacobian::assemble_info;
use calibguide::planner::random_pose;
use calibguide::simharness::{reference_board, reference_rig};
use calibguide::{JacobianMode, Pose, ViewPair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> calibguide::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(10, |s| s.parse().expect("views"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let rig = reference_rig();
    let board = reference_board();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut poses: Vec<Pose> = Vec::new();
    let mut views = Vec::new();
    println!("views  trace(printed)  trace(full)  rot sd (deg)  trans sd (mm)");
    for m in 1..=count {
        let pose = random_pose(&Default::default(), &rig, &board, &poses, &mut rng)?;
        poses.push(pose);
        views.push(ViewPair::exact(&rig, &board, &pose)?);
        let report = |mode| relative_covariance(&assemble_info(&views, &rig, mode)?);
        match (
            report(JacobianMode::Printed),
            report(JacobianMode::FullChain),
        ) {
            (Ok(p), Ok(f)) => {
                let rot = (0..3)
                    .map(|i| f.sigma[(i, i)])
                    .sum::<f64>()
                    .sqrt()
                    .to_degrees();
                let trans = (3..6).map(|i| f.sigma[(i, i)]).sum::<f64>().sqrt();
                println!(
                    "{m:5}  {:14.4}  {:11.4}  {rot:12.5}  {trans:13.4}",
                    p.trace, f.trace
                );
            }
            (p, f) => println!("{m:5}  {:?} / {:?}", p.err(), f.err()),
        }
    }
    println!("(unit pixel noise; scale standard deviations by sigma)");
    Ok(())
}
