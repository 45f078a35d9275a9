//! Simulates noisy stereo views, calibrates them with a robust kernel and
//! reports the usual quality metrics. Optionally writes the dataset as JSON
//! for `calibguide calibrate`.
//!
//! `cargo run --release --example calibrate_dataset -- [views] [sigma] [out.json]`

use calibguide::pipeline::{
    calibrate, reprojection_error_stats, rotation_error, translation_error,
    triangulation_error_stats,
};
use calibguide::planner::random_pose;
use calibguide::simharness::{reference_board, reference_rig, synthesize_view};
use calibguide::{CalibrationDataset, RobustKernel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> calibguide::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(8, |s| s.parse().expect("views"));
    let sigma: f64 = args.next().map_or(1.0, |s| s.parse().expect("sigma"));
    let out = args.next();

    let rig = reference_rig();
    let board = reference_board();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut poses = Vec::new();
    let mut views = Vec::new();
    for _ in 0..count {
        let pose = random_pose(&Default::default(), &rig, &board, &poses, &mut rng)?;
        poses.push(pose);
        views.push(synthesize_view(&rig, &board, &pose, sigma, &mut rng)?);
    }
    let dataset = CalibrationDataset {
        left: rig.left,
        right: rig.right,
        board,
        views,
    };
    if let Some(path) = out {
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&dataset).expect("serializable"),
        )
        .expect("write dataset");
        println!("dataset written to {path}");
    }

    for kernel in [
        RobustKernel::Quadratic,
        RobustKernel::Huber { threshold: 1.0 },
    ] {
        let result = calibrate(&dataset, kernel)?;
        let reproj = reprojection_error_stats(&dataset, &result)?;
        println!(
            "{kernel:?}: rotation err {:.4} deg, translation err {:.4} %, reprojection rms {:.3} px (mean {:.3}), triangulation {:.4} mm, {} iterations",
            rotation_error(&rig.relative, &result.relative),
            translation_error(&rig.relative.tvec, &result.relative.tvec)?,
            reproj.rms,
            reproj.mean,
            triangulation_error_stats(&dataset, &result)?,
            result.iterations,
        );
    }
    Ok(())
}
