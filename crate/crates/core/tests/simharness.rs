mod common;

use calibguide::planner::random_pose;
use calibguide::simharness::{
    compare_strategies, reference_board, reference_rig, run_convergence, run_trial,
    synthesize_view, CompareSpec, ExperimentConfig, Strategy,
};

fn quick(sigma: f64, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        noise_sigmas: vec![sigma],
        trials,
        n_random_images: 3,
        n_optimal_images: 3,
        eval_views: 3,
        compare: CompareSpec {
            sigma,
            random_counts: vec![2, 4],
            optimal_counts: vec![1, 2],
        },
        ..Default::default()
    }
}

#[test]
fn noise_has_requested_spread() {
    let rig = reference_rig();
    let board = reference_board();
    let mut rng = common::rng(1);
    let pose = common::random_visible_pose(&mut rng, &rig, &board);
    let exact = calibguide::ViewPair::exact(&rig, &board, &pose).unwrap();
    let mut deltas = Vec::new();
    while deltas.len() < 100_000 {
        let v = synthesize_view(&rig, &board, &pose, 1.0, &mut rng).unwrap();
        for (a, b) in v
            .left_pixels
            .iter()
            .chain(&v.right_pixels)
            .zip(exact.left_pixels.iter().chain(&exact.right_pixels))
        {
            deltas.extend([a.x - b.x, a.y - b.y]);
        }
    }
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let std = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 0.01, "{mean}");
    assert!((0.99..=1.01).contains(&std), "{std}");
}

#[test]
fn near_noiseless_trial_converges_for_both_strategies() {
    let cfg = quick(1e-6, 1);
    let curves = run_trial(&cfg, 0, 0).unwrap();
    for curve in [&curves.random, &curves.optimal] {
        assert_eq!(curve.len(), 4);
        let &(images, r, t) = curve.last().unwrap();
        assert_eq!(images, 5);
        assert!(r < 1e-3 && t < 1e-3, "{images} images: {r} deg, {t} %");
    }
}

#[test]
fn convergence_is_reproducible_across_thread_counts() {
    let cfg = quick(1.0, 2);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = one.install(|| run_convergence(&cfg)).unwrap().to_csv();
    let b = many.install(|| run_convergence(&cfg)).unwrap().to_csv();
    assert_eq!(a, b);
    assert!(a.starts_with("strategy,sigma_px,images,"));
    // header + (1 + 3) rows per strategy
    assert_eq!(a.lines().count(), 1 + 2 * 4);
    let report = run_convergence(&cfg).unwrap();
    assert_eq!(report.row(Strategy::Optimal, 1.0, 5).unwrap().trials, 2);
    // Both strategies start from the same initial views.
    let r0 = report.row(Strategy::Random, 1.0, 2).unwrap();
    let o0 = report.row(Strategy::Optimal, 1.0, 2).unwrap();
    assert_eq!(r0.rotation_mean, o0.rotation_mean);
}

#[test]
fn comparison_rows_and_labels() {
    let cfg = quick(1e-6, 1);
    let report = compare_strategies(&cfg).unwrap();
    let labels: Vec<&str> = report.rows.iter().map(|r| r.scheme.as_str()).collect();
    assert_eq!(
        labels,
        [
            "2-random",
            "4-random",
            "2-random + 1-optimal",
            "2-random + 2-optimal"
        ]
    );
    let truth = reference_rig().relative;
    for row in &report.rows {
        // Tiny noise: every scheme lands on the true rig.
        assert!(
            row.reprojection_px < 1e-4,
            "{}: {}",
            row.scheme,
            row.reprojection_px
        );
        assert!(
            row.triangulation_mm < 1e-2,
            "{}: {}",
            row.scheme,
            row.triangulation_mm
        );
        for k in 0..3 {
            assert!((row.rotation_deg[k] - truth.rvec[k].to_degrees()).abs() < 1e-3);
            assert!((row.translation_mm[k] - truth.tvec[k]).abs() < 1e-2);
        }
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(compare_strategies(&cfg).unwrap().to_csv(), csv);
}

#[test]
fn config_json_round_trip_and_defaults() {
    let cfg = ExperimentConfig::default();
    let text = serde_json::to_string_pretty(&cfg).unwrap();
    assert_eq!(
        serde_json::from_str::<ExperimentConfig>(&text).unwrap(),
        cfg
    );
    // Missing fields fall back to defaults.
    let partial: ExperimentConfig =
        serde_json::from_str(r#"{"trials": 7, "noise_sigmas": [0.5]}"#).unwrap();
    assert_eq!(partial.trials, 7);
    assert_eq!(partial.board, reference_board());
    assert_eq!((cfg.n_random_images, cfg.n_optimal_images), (28, 18));
}

#[test]
fn random_views_never_repeat_exactly() {
    let cfg = ExperimentConfig::default();
    let mut rng = common::rng(2);
    let mut poses = Vec::new();
    for _ in 0..50 {
        let p = random_pose(&cfg.random_pose, &cfg.rig, &cfg.board, &poses, &mut rng).unwrap();
        assert!(poses
            .iter()
            .all(|q: &calibguide::Pose| (q.tvec - p.tvec).norm() > 0.0));
        poses.push(p);
    }
}
