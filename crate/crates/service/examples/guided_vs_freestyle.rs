//! Drives guided and freestyle sessions in-process and reports how many
//! captures each needs to reach a covariance-trace target.
//!
//! `cargo run --release -p calibguide-service --example guided_vs_freestyle -- [seeds] [target] [sigma]`

use calibguide::planner::{random_pose, RandomPoseConstraints};
use calibguide::simharness::{reference_board, reference_rig};
use calibguide::Pose;
use calibguide_service::{
    CaptureRequest, CreateRequest, Mode, SessionState, Store, SuggestRequest, Targets,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MAX_CAPTURES: usize = 30;

async fn run(
    store: &Store,
    mode: Mode,
    seed: u64,
    target: f64,
    sigma: f64,
) -> (Option<usize>, Vec<Option<f64>>) {
    let req: CreateRequest = serde_json::from_value(serde_json::json!({
        "rig": reference_rig(),
        "board": reference_board(),
        "mode": mode,
        "seed": seed,
        "targets": Targets { trace: Some(target), reprojection_px: None },
    }))
    .unwrap();
    let id = store.create(req).await.unwrap().id;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history: Vec<Pose> = Vec::new();
    let mut state: SessionState = store.state(&id).await.unwrap();
    let mut missed = false;
    while !state.target_reached && state.views.len() < MAX_CAPTURES {
        // Replanning without a new view gives the same pose, so fall back to a random one.
        let pose = if mode == Mode::Guided && state.views.len() >= 2 && !missed {
            store
                .suggest(&id, SuggestRequest::default())
                .await
                .unwrap()
                .candidate
                .pose
        } else {
            random_pose(
                &RandomPoseConstraints::default(),
                &reference_rig(),
                &reference_board(),
                &history,
                &mut rng,
            )
            .unwrap()
        };
        history.push(pose);
        match store
            .capture(&id, CaptureRequest::Simulated { pose, sigma })
            .await
        {
            Ok(s) => {
                state = s;
                missed = false;
            }
            // A plan from a rough estimate can miss the true frustum.
            Err(e) => {
                eprintln!(
                    "seed {seed} {mode:?}: capture {} failed: {e}",
                    state.views.len() + 1
                );
                missed = true;
            }
        }
    }
    (
        state.target_reached.then_some(state.views.len()),
        state.trace_history,
    )
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

#[tokio::main]
async fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().map_or(10, |s| s.parse().expect("seeds"));
    let target: f64 = args.get(1).map_or(5.0, |s| s.parse().expect("target"));
    let sigma: f64 = args.get(2).map_or(1.0, |s| s.parse().expect("sigma"));
    let dir = std::env::temp_dir().join(format!("calibguide-example-{}", std::process::id()));
    let store = Store::open(&dir).unwrap();

    let mut counts = [Vec::new(), Vec::new()];
    for seed in 0..seeds {
        for (k, mode) in [Mode::Guided, Mode::Freestyle].into_iter().enumerate() {
            let (n, traces) = run(&store, mode, seed, target, sigma).await;
            let shown: Vec<String> = traces
                .iter()
                .map(|t| t.map_or("-".into(), |t| format!("{t:.1}")))
                .collect();
            println!(
                "seed {seed:3} {mode:?}: {:>4} captures | {}",
                n.map_or("n/a".into(), |n| n.to_string()),
                shown.join(" ")
            );
            counts[k].push(n.unwrap_or(MAX_CAPTURES + 1));
        }
    }
    println!(
        "target trace {target}: median captures guided {} vs freestyle {}",
        median(counts[0].clone()),
        median(counts[1].clone())
    );
    let _ = std::fs::remove_dir_all(dir);
}
