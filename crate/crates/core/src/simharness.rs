//! Synthetic experiments: noisy view generation, convergence curves of the
//! random and planned capture strategies, and scheme comparison tables.
//!
//! Every trial draws from its own ChaCha stream derived from
//! `(seed, sigma index, trial index)`, so trials run in parallel and still
//! produce exactly the serial result.

use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compose_right_extrinsics, BoardSpec, CameraModel, Pose, StereoRig};
use crate::jacobian::ViewPair;
use crate::pipeline::{
    fit_consistency, hypotheses_from, monocular_poses, refine_best, relative_from_monocular,
    reprojection_error_stats, rotation_error, solve_pnp, stereo_board_pose_from_rays,
    translation_error, triangulation_error_stats, view_rays, CalibrationDataset, CalibrationResult,
    RobustKernel, ViewRays, INIT_HYPOTHESES, MAX_ITERATIONS, SCREENING_ITERATIONS,
};
use crate::planner::{
    is_visible, search, PlanningState, RandomPoseConstraints, SearchBounds, SearchConfig,
};

/// Residual-variance ratio above which the current estimate is not trusted
/// for planning.
const MAX_FIT_RATIO: f64 = 1.2;
/// Re-plans with a fresh seed when the planned pose turns out not to be
/// visible under the true rig.
const PLAN_RETRIES: u64 = 4;

/// The two-camera rig used throughout the simulation study: 640×480,
/// f = 800 px, principal point (320, 240), d = [0.01, 0.1, 0, 0].
pub fn reference_rig() -> StereoRig {
    let cam = CameraModel::pinhole(800.0, 800.0, 320.0, 240.0, 640, 480)
        .with_distortion([0.01, 0.1, 0.0, 0.0]);
    StereoRig {
        left: cam,
        right: cam,
        relative: Pose::new(
            Vector3::new(-0.003, -0.303, -0.017),
            Vector3::new(440.3, -6.2, 25.1),
        ),
    }
}

/// 9×6 corners at 5 mm pitch.
pub fn reference_board() -> BoardSpec {
    BoardSpec::new(9, 6, 5.0)
}

/// Exact projections plus i.i.d. `N(0, σ²)` noise on every pixel coordinate.
pub fn synthesize_view<R: Rng + ?Sized>(
    rig: &StereoRig,
    board: &BoardSpec,
    pose: &Pose,
    sigma: f64,
    rng: &mut R,
) -> Result<ViewPair> {
    if !is_visible(pose, rig, board, 0.0) {
        return Err(Error::NotVisible);
    }
    let mut view = ViewPair::exact(rig, board, pose)?;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for p in view
            .left_pixels
            .iter_mut()
            .chain(view.right_pixels.iter_mut())
        {
            *p += Vector2::new(normal.sample(rng), normal.sample(rng));
        }
    }
    Ok(view)
}

/// Scheme sizes for [`compare_strategies`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSpec {
    pub sigma: f64,
    /// Total image counts of the random-only schemes.
    pub random_counts: Vec<usize>,
    /// Planned images added on top of the initial random pairs.
    pub optimal_counts: Vec<usize>,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            random_counts: vec![2, 10, 20],
            optimal_counts: vec![2, 4, 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub rig: StereoRig,
    pub board: BoardSpec,
    pub noise_sigmas: Vec<f64>,
    pub trials: usize,
    /// Random pairs shared by both strategies before they diverge.
    pub n_initial: usize,
    pub n_random_images: usize,
    pub n_optimal_images: usize,
    pub seed: u64,
    pub random_pose: RandomPoseConstraints,
    /// Planner settings; the seed is re-derived per planning call.
    pub search: SearchConfig,
    /// Noise-free held-out views used to measure triangulation error.
    pub eval_views: usize,
    pub compare: CompareSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rig: reference_rig(),
            board: reference_board(),
            noise_sigmas: vec![0.5, 1.0, 2.0],
            trials: 100,
            n_initial: 2,
            n_random_images: 28,
            n_optimal_images: 18,
            seed: 0,
            random_pose: RandomPoseConstraints::default(),
            search: SearchConfig::default(),
            eval_views: 10,
            compare: CompareSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        self.board.validate()?;
        self.random_pose.validate()?;
        self.search.validate()?;
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.n_initial < 2 {
            return Err(Error::InvalidConfig("n_initial must be >= 2".into()));
        }
        if self.noise_sigmas.is_empty() || self.noise_sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig("noise_sigmas must be positive".into()));
        }
        if !(self.compare.sigma > 0.0) {
            return Err(Error::InvalidConfig(
                "compare.sigma must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Planner search box matching the random-pose workspace, so both
    /// strategies draw from the same set of board placements.
    pub fn workspace_bounds(&self) -> Result<SearchBounds> {
        let c = &self.random_pose;
        SearchBounds::workspace(
            &self.rig,
            c.rotation_range,
            c.depth_range_mm,
            self.search.margin_px,
        )
    }

    fn trial_rng(&self, stream: u64, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((stream << 32) | trial as u64);
        rng
    }

    fn dataset(&self, views: Vec<ViewPair>) -> CalibrationDataset {
        CalibrationDataset {
            left: self.rig.left,
            right: self.rig.right,
            board: self.board,
            views,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Optimal,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Optimal => "optimal",
        }
    }
}

/// A growing calibration: views, their true poses, and the latest estimate.
#[derive(Clone)]
struct Session<'a> {
    cfg: &'a ExperimentConfig,
    sigma: f64,
    views: Vec<ViewPair>,
    true_poses: Vec<Pose>,
    /// Per-view monocular poses and undistorted rays, computed once.
    mono: Vec<(Pose, Pose)>,
    rays: Vec<ViewRays>,
    result: CalibrationResult,
}

impl<'a> Session<'a> {
    fn start(
        cfg: &'a ExperimentConfig,
        sigma: f64,
        true_poses: Vec<Pose>,
        views: Vec<ViewPair>,
    ) -> Result<Self> {
        let ds = cfg.dataset(views.clone());
        let mono = monocular_poses(&ds)?;
        let rays = views
            .iter()
            .map(|v| view_rays(&ds, v))
            .collect::<Result<Vec<_>>>()?;
        let hyps = hypotheses_from(&ds, &mono, &rays, INIT_HYPOTHESES)?;
        let result = refine_best(&ds, hyps, RobustKernel::Quadratic, MAX_ITERATIONS)?;
        Ok(Self {
            cfg,
            sigma,
            views,
            true_poses,
            mono,
            rays,
            result,
        })
    }

    fn dataset(&self) -> CalibrationDataset {
        self.cfg.dataset(self.views.clone())
    }

    /// Adds a view and re-runs bundle adjustment; the previous estimate
    /// competes with fresh initial hypotheses.
    fn add(&mut self, pose: Pose, view: ViewPair) -> Result<()> {
        let kernel = RobustKernel::Quadratic;
        self.views.push(view);
        self.true_poses.push(pose);
        let ds = self.dataset();
        let new_view = ds.views.last().unwrap();
        self.mono.push((
            solve_pnp(&ds.board, &new_view.left_pixels, &ds.left)?,
            solve_pnp(&ds.board, &new_view.right_pixels, &ds.right)?,
        ));
        self.rays.push(view_rays(&ds, new_view)?);
        // Warm start: the new view's pose from triangulation under the
        // current estimate.
        let new_left = stereo_board_pose_from_rays(
            &self.result.relative,
            &ds.board,
            self.rays.last().unwrap(),
        )
        .unwrap_or(self.mono.last().unwrap().0);
        let mut init = self.result.clone();
        init.per_view_left_abs.push(new_left);
        let fresh = hypotheses_from(&ds, &self.mono, &self.rays, INIT_HYPOTHESES)?;
        self.result = refine_best(
            &ds,
            std::iter::once(init).chain(fresh),
            kernel,
            SCREENING_ITERATIONS,
        )?;
        Ok(())
    }

    fn errors(&self) -> Result<(f64, f64)> {
        let truth = &self.cfg.rig.relative;
        Ok((
            rotation_error(truth, &self.result.relative),
            translation_error(&truth.tvec, &self.result.relative.tvec)?,
        ))
    }

    fn planning_state(&self) -> PlanningState {
        PlanningState {
            rig: self.cfg.rig.with_relative(self.result.relative),
            board: self.cfg.board,
            view_poses: self.result.per_view_left_abs.clone(),
        }
    }

    fn add_random<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        let pose = crate::planner::random_pose(
            &self.cfg.random_pose,
            &self.cfg.rig,
            &self.cfg.board,
            &self.true_poses,
            rng,
        )?;
        let view = synthesize_view(&self.cfg.rig, &self.cfg.board, &pose, self.sigma, rng)?;
        self.add(pose, view)
    }

    fn add_optimal<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        // Planning from a calibration the data contradicts is meaningless;
        // take an exploratory view instead.
        if fit_consistency(&self.dataset(), &self.result, &self.mono)? > MAX_FIT_RATIO {
            return self.add_random(rng);
        }
        let state = self.planning_state();
        let base_seed: u64 = rng.random();
        let bounds = match self.cfg.search.bounds {
            Some(b) => b,
            None => self.cfg.workspace_bounds()?,
        };
        for attempt in 0..PLAN_RETRIES {
            let cfg = SearchConfig {
                seed: base_seed.wrapping_add(attempt),
                bounds: Some(bounds),
                ..self.cfg.search.clone()
            };
            let best = search(&state, &cfg)?.best;
            if let Ok(view) =
                synthesize_view(&self.cfg.rig, &self.cfg.board, &best.pose, self.sigma, rng)
            {
                return self.add(best.pose, view);
            }
        }
        // The estimate is too far off for planned poses to land in view.
        self.add_random(rng)
    }
}

fn initial_views<R: Rng>(
    cfg: &ExperimentConfig,
    sigma: f64,
    rng: &mut R,
) -> Result<(Vec<Pose>, Vec<ViewPair>)> {
    let mut poses = Vec::new();
    let mut views = Vec::new();
    for _ in 0..cfg.n_initial {
        let pose =
            crate::planner::random_pose(&cfg.random_pose, &cfg.rig, &cfg.board, &poses, rng)?;
        views.push(synthesize_view(&cfg.rig, &cfg.board, &pose, sigma, rng)?);
        poses.push(pose);
    }
    Ok((poses, views))
}

/// Errors of one trial: `(images, rotation deg, translation %)` per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCurves {
    pub random: Vec<(usize, f64, f64)>,
    pub optimal: Vec<(usize, f64, f64)>,
}

/// One trial of the convergence experiment at noise level `sigma`.
pub fn run_trial(cfg: &ExperimentConfig, sigma_index: usize, trial: usize) -> Result<TrialCurves> {
    let sigma = cfg.noise_sigmas[sigma_index];
    let mut rng = cfg.trial_rng(sigma_index as u64, trial);
    let (poses, views) = initial_views(cfg, sigma, &mut rng)?;
    let mut rng_random = ChaCha8Rng::seed_from_u64(rng.random());
    let mut rng_optimal = ChaCha8Rng::seed_from_u64(rng.random());

    let shared = Session::start(cfg, sigma, poses, views)?;
    let (r0, t0) = shared.errors()?;
    let n0 = cfg.n_initial;

    let mut random = shared.clone();
    let mut random_curve = vec![(n0, r0, t0)];
    for k in 1..=cfg.n_random_images {
        random.add_random(&mut rng_random)?;
        let (r, t) = random.errors()?;
        random_curve.push((n0 + k, r, t));
    }

    let mut optimal = shared;
    let mut optimal_curve = vec![(n0, r0, t0)];
    for k in 1..=cfg.n_optimal_images {
        optimal.add_optimal(&mut rng_optimal)?;
        let (r, t) = optimal.errors()?;
        optimal_curve.push((n0 + k, r, t));
    }
    Ok(TrialCurves {
        random: random_curve,
        optimal: optimal_curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub strategy: Strategy,
    pub sigma: f64,
    pub images: usize,
    pub rotation_mean: f64,
    pub rotation_std: f64,
    pub translation_mean: f64,
    pub translation_std: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl ConvergenceReport {
    pub fn row(&self, strategy: Strategy, sigma: f64, images: usize) -> Option<&ConvergenceRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.sigma == sigma && r.images == images)
    }

    pub const CSV_HEADER: &'static str =
        "strategy,sigma_px,images,rotation_error_deg_mean,rotation_error_deg_std,translation_error_pct_mean,translation_error_pct_std,trials";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{}",
                r.strategy.as_str(),
                r.sigma,
                r.images,
                r.rotation_mean,
                r.rotation_std,
                r.translation_mean,
                r.translation_std,
                r.trials
            );
        }
        out
    }
}

fn aggregate(
    strategy: Strategy,
    sigma: f64,
    curves: &[&[(usize, f64, f64)]],
) -> Vec<ConvergenceRow> {
    let len = curves[0].len();
    (0..len)
        .map(|k| {
            let rot: Vec<f64> = curves.iter().map(|c| c[k].1).collect();
            let tr: Vec<f64> = curves.iter().map(|c| c[k].2).collect();
            let (rotation_mean, rotation_std) = mean_std(&rot);
            let (translation_mean, translation_std) = mean_std(&tr);
            ConvergenceRow {
                strategy,
                sigma,
                images: curves[0][k].0,
                rotation_mean,
                rotation_std,
                translation_mean,
                translation_std,
                trials: curves.len(),
            }
        })
        .collect()
}

/// Convergence of both strategies for every noise level, averaged over trials.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (si, &sigma) in cfg.noise_sigmas.iter().enumerate() {
        let trials = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, si, t))
            .collect::<Result<Vec<_>>>()?;
        let random: Vec<&[_]> = trials.iter().map(|t| t.random.as_slice()).collect();
        let optimal: Vec<&[_]> = trials.iter().map(|t| t.optimal.as_slice()).collect();
        rows.extend(aggregate(Strategy::Random, sigma, &random));
        rows.extend(aggregate(Strategy::Optimal, sigma, &optimal));
    }
    Ok(ConvergenceReport { rows })
}

/// One scheme's calibration in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSample {
    pub scheme: String,
    pub relative: Pose,
    pub rms_reproj: f64,
    pub triangulation_error: f64,
    /// Triangulation error on the scheme's own calibration views.
    pub calibration_te: f64,
}

/// Scheme averages in the layout of a calibration-scheme table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeRow {
    pub scheme: String,
    /// Mean axis-angle rotation in degrees.
    pub rotation_deg: [f64; 3],
    pub translation_mm: [f64; 3],
    pub reprojection_px: f64,
    pub triangulation_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<SchemeRow>,
    /// Per-trial samples, schemes in row order.
    pub trials: Vec<Vec<SchemeSample>>,
}

impl CompareReport {
    pub const CSV_HEADER: &'static str =
        "scheme,r_x_deg,r_y_deg,r_z_deg,t_x_mm,t_y_mm,t_z_mm,re_px,te_mm";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.scheme,
                r.rotation_deg[0],
                r.rotation_deg[1],
                r.rotation_deg[2],
                r.translation_mm[0],
                r.translation_mm[1],
                r.translation_mm[2],
                r.reprojection_px,
                r.triangulation_mm
            );
        }
        out
    }

    /// Mean triangulation error of a scheme over trials.
    pub fn mean_te(&self, scheme: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme)
            .map(|r| r.triangulation_mm)
    }
}

pub fn random_scheme_label(images: usize) -> String {
    format!("{images}-random")
}

pub fn optimal_scheme_label(initial: usize, planned: usize) -> String {
    format!("{initial}-random + {planned}-optimal")
}

/// Noise-free held-out views for triangulation error.
fn evaluation_dataset<R: Rng>(cfg: &ExperimentConfig, rng: &mut R) -> Result<CalibrationDataset> {
    let mut poses = Vec::new();
    let mut views = Vec::new();
    for _ in 0..cfg.eval_views.max(1) {
        let pose =
            crate::planner::random_pose(&cfg.random_pose, &cfg.rig, &cfg.board, &poses, rng)?;
        views.push(synthesize_view(&cfg.rig, &cfg.board, &pose, 0.0, rng)?);
        poses.push(pose);
    }
    Ok(cfg.dataset(views))
}

/// Triangulation error of a relative-pose estimate on held-out views; the
/// board poses come from left-camera PnP on the (noise-free) observations.
pub fn held_out_triangulation_error(eval: &CalibrationDataset, relative: &Pose) -> Result<f64> {
    let poses = eval
        .views
        .iter()
        .map(|v| solve_pnp(&eval.board, &v.left_pixels, &eval.left))
        .collect::<Result<Vec<_>>>()?;
    triangulation_error_stats(eval, &CalibrationResult::new(*relative, poses))
}

fn sample(scheme: String, session: &Session, eval: &CalibrationDataset) -> Result<SchemeSample> {
    Ok(SchemeSample {
        scheme,
        relative: session.result.relative,
        rms_reproj: reprojection_error_stats(&session.dataset(), &session.result)?.rms,
        triangulation_error: held_out_triangulation_error(eval, &session.result.relative)?,
        calibration_te: triangulation_error_stats(&session.dataset(), &session.result)?,
    })
}

/// One paired trial of the scheme comparison.
pub fn compare_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<SchemeSample>> {
    let spec = &cfg.compare;
    let sigma = spec.sigma;
    let mut rng = cfg.trial_rng(u32::MAX as u64, trial);
    let (poses, views) = initial_views(cfg, sigma, &mut rng)?;
    let eval = evaluation_dataset(cfg, &mut ChaCha8Rng::seed_from_u64(rng.random()))?;
    let mut rng_random = ChaCha8Rng::seed_from_u64(rng.random());
    let mut rng_optimal = ChaCha8Rng::seed_from_u64(rng.random());
    let n0 = cfg.n_initial;

    let mut out = Vec::new();
    let mut session = Session::start(cfg, sigma, poses.clone(), views.clone())?;
    let max_random = spec.random_counts.iter().copied().max().unwrap_or(n0);
    for count in n0..=max_random {
        if count > n0 {
            session.add_random(&mut rng_random)?;
        }
        if spec.random_counts.contains(&count) {
            out.push(sample(random_scheme_label(count), &session, &eval)?);
        }
    }

    let mut session = Session::start(cfg, sigma, poses, views)?;
    let max_opt = spec.optimal_counts.iter().copied().max().unwrap_or(0);
    for planned in 1..=max_opt {
        session.add_optimal(&mut rng_optimal)?;
        if spec.optimal_counts.contains(&planned) {
            out.push(sample(optimal_scheme_label(n0, planned), &session, &eval)?);
        }
    }
    Ok(out)
}

/// Scheme comparison averaged over `cfg.trials` paired trials.
pub fn compare_strategies(cfg: &ExperimentConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| compare_trial(cfg, t))
        .collect::<Result<Vec<_>>>()?;
    let n = trials.len() as f64;
    let rows = (0..trials[0].len())
        .map(|k| {
            let mut r = Vector3::zeros();
            let mut t = Vector3::zeros();
            let (mut re, mut te) = (0.0, 0.0);
            for tr in &trials {
                let s = &tr[k];
                r += s.relative.rvec.map(f64::to_degrees);
                t += s.relative.tvec;
                re += s.rms_reproj;
                te += s.triangulation_error;
            }
            SchemeRow {
                scheme: trials[0][k].scheme.clone(),
                rotation_deg: (r / n).into(),
                translation_mm: (t / n).into(),
                reprojection_px: re / n,
                triangulation_mm: te / n,
            }
        })
        .collect();
    Ok(CompareReport { rows, trials })
}

/// Held-out triangulation errors of monocular averaging versus joint stereo
/// calibration on the same noisy views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonocularComparison {
    pub monocular_te: f64,
    pub stereo_te: f64,
    pub monocular_rms: f64,
    pub stereo_rms: f64,
}

/// Builds `n_initial` random plus `planned` optimal views, then calibrates
/// them both by per-view monocular PnP averaging and by stereo bundle
/// adjustment.
pub fn monocular_vs_stereo_trial(
    cfg: &ExperimentConfig,
    planned: usize,
    trial: usize,
) -> Result<MonocularComparison> {
    let sigma = cfg.compare.sigma;
    let mut rng = cfg.trial_rng(u32::MAX as u64 - 1, trial);
    let (poses, views) = initial_views(cfg, sigma, &mut rng)?;
    let eval = evaluation_dataset(cfg, &mut ChaCha8Rng::seed_from_u64(rng.random()))?;
    let mut session = Session::start(cfg, sigma, poses, views)?;
    for _ in 0..planned {
        session.add_optimal(&mut rng)?;
    }
    let ds = session.dataset();
    let mono = monocular_poses(&ds)?;
    let mono_rel = relative_from_monocular(&mono)?;
    let mono_result = CalibrationResult::new(mono_rel, mono.iter().map(|(l, _)| *l).collect());
    Ok(MonocularComparison {
        monocular_te: held_out_triangulation_error(&eval, &mono_rel)?,
        stereo_te: held_out_triangulation_error(&eval, &session.result.relative)?,
        monocular_rms: reprojection_error_stats(&ds, &mono_result)?.rms,
        stereo_rms: session.result.rms_reproj,
    })
}

/// The right-camera pose of the true rig for a left pose (handy for examples).
pub fn true_right_pose(cfg: &ExperimentConfig, left: &Pose) -> Pose {
    compose_right_extrinsics(&cfg.rig.relative, left)
}
