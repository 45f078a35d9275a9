//! Plans the next board pose after two random captures and shows how much it
//! shrinks the covariance trace compared with another random pose.
//!
//! `cargo run --release --example next_pose -- [seed]`

use calibguide::covariance::{covariance_from_reduced, trace_objective, UNIT_WEIGHTS};
use calibguide::jacobian::view_info;
use calibguide::planner::{is_visible, random_pose, search, DEFAULT_MARGIN_PX};
use calibguide::simharness::{reference_board, reference_rig};
use calibguide::{JacobianMode, PlanningState, SearchConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> calibguide::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map_or(3, |s| s.parse().expect("seed"));
    let rig = reference_rig();
    let board = reference_board();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut poses = Vec::new();
    for _ in 0..2 {
        let p = random_pose(&Default::default(), &rig, &board, &poses, &mut rng)?;
        poses.push(p);
    }
    let state = PlanningState {
        rig,
        board,
        view_poses: poses.clone(),
    };
    let mut cfg = SearchConfig {
        seed,
        ..Default::default()
    };
    cfg.jacobian.full_chain = true;
    let outcome = search(&state, &cfg)?;
    let best = &outcome.best;

    let mode = JacobianMode::FullChain;
    let with = |pose| -> calibguide::Result<f64> {
        let extra = view_info(&rig, &board, pose, mode)?.reduced()?;
        let report = covariance_from_reduced(&(state.reduced_information(mode)? + extra))?;
        Ok(trace_objective(&report, &UNIT_WEIGHTS))
    };
    let random = random_pose(&Default::default(), &rig, &board, &poses, &mut rng)?;

    println!(
        "current trace      {:.4}",
        outcome.current_trace.unwrap_or(f64::NAN)
    );
    println!(
        "planned pose       rvec {:.3?} tvec {:.1?}",
        best.pose.rvec.as_slice(),
        best.pose.tvec.as_slice()
    );
    println!(
        "  trace            {:.4} (recomputed {:.4})",
        best.trace,
        with(&best.pose)?
    );
    println!(
        "  visible          {}",
        is_visible(&best.pose, &rig, &board, DEFAULT_MARGIN_PX)
    );
    println!("random pose trace  {:.4}", with(&random)?);
    println!(
        "search: {} candidates, {} feasible",
        outcome.iterations, outcome.feasible
    );
    Ok(())
}
