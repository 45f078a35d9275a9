//! Next-optimal-pose search and the constrained random-pose baseline.
//!
//! The search scores a hypothetical extra view by the trace of the
//! relative-extrinsics covariance it would leave behind. Because each view
//! enters the Schur complement as an independent additive term, the
//! information of the already captured views is reduced once and every
//! candidate only adds its own 6×6 contribution.

use nalgebra::{Matrix6, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{covariance_from_reduced, trace_objective, UNIT_WEIGHTS};
use crate::error::{Error, Result};
use crate::geometry::{
    compose_right_extrinsics, rotation_from_axis_angle, BoardSpec, Pose, StereoRig,
};
use crate::jacobian::{view_info, JacobianMode, JacobianSettings};
use crate::serde_util;

/// Pixel margin used by visibility checks unless configured otherwise.
pub const DEFAULT_MARGIN_PX: f64 = 5.0;

const EVAL_BATCH: usize = 32;

/// Everything the planner needs about a calibration in progress.
///
/// `rig.relative` holds the current relative estimate, which the search treats
/// as the true value; `view_poses` are the current left absolute estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningState {
    pub rig: StereoRig,
    pub board: BoardSpec,
    pub view_poses: Vec<Pose>,
}

impl PlanningState {
    /// Mean depth of the board centre over the captured views.
    pub fn mean_depth(&self) -> Option<f64> {
        if self.view_poses.is_empty() {
            return None;
        }
        let c = self.board.center();
        let sum: f64 = self.view_poses.iter().map(|p| p.transform(&c).z).sum();
        Some(sum / self.view_poses.len() as f64)
    }

    /// Schur-reduced information of the captured views.
    pub fn reduced_information(&self, mode: JacobianMode) -> Result<Matrix6<f64>> {
        let mut s = Matrix6::zeros();
        for pose in &self.view_poses {
            s += view_info(&self.rig, &self.board, pose, mode)?.reduced()?;
        }
        Ok(s)
    }
}

/// Axis-aligned sampling box. Rotations are axis-angle components (rad);
/// positions are the board centre in the left camera frame (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    #[serde(with = "serde_util::vec3")]
    pub rotation_min: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub rotation_max: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub center_min: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub center_max: Vector3<f64>,
}

impl SearchBounds {
    /// Box around the overlap frustum at `[0.5, 1.5]×` the mean view depth
    /// with rotations in `±45°` per axis.
    pub fn around_views(state: &PlanningState, margin: f64) -> Result<Self> {
        let depth = state
            .mean_depth()
            .ok_or(Error::InsufficientViews { needed: 1, got: 0 })?;
        let (zmin, zmax) = (0.5 * depth, 1.5 * depth);
        let (lo, hi) = overlap_extent(&state.rig, zmin, zmax, margin).unwrap_or_else(|| {
            let cam = &state.rig.left;
            let lo = Vector2::new(-cam.u0 / cam.fu, -cam.v0 / cam.fv) * zmax;
            let hi = Vector2::new(
                (cam.width as f64 - cam.u0) / cam.fu,
                (cam.height as f64 - cam.v0) / cam.fv,
            ) * zmax;
            (lo, hi)
        });
        let r = 45f64.to_radians();
        Ok(Self {
            rotation_min: Vector3::repeat(-r),
            rotation_max: Vector3::repeat(r),
            center_min: Vector3::new(lo.x, lo.y, zmin),
            center_max: Vector3::new(hi.x, hi.y, zmax),
        })
    }

    /// Box over a fixed workspace: board-centre depths in `depth_range`,
    /// the lateral overlap extent there, rotations `±rotation_range` per axis.
    pub fn workspace(
        rig: &StereoRig,
        rotation_range: f64,
        depth_range: [f64; 2],
        margin: f64,
    ) -> Result<Self> {
        let [zmin, zmax] = depth_range;
        let (lo, hi) = overlap_extent(rig, zmin, zmax, margin)
            .ok_or(Error::ConstraintUnsatisfiable { attempts: 0 })?;
        Ok(Self {
            rotation_min: Vector3::repeat(-rotation_range),
            rotation_max: Vector3::repeat(rotation_range),
            center_min: Vector3::new(lo.x, lo.y, zmin),
            center_max: Vector3::new(hi.x, hi.y, zmax),
        })
    }

    /// Degenerate box holding exactly one pose.
    pub fn single(pose: &Pose, board: &BoardSpec) -> Self {
        let c = pose.transform(&board.center());
        Self {
            rotation_min: pose.rvec,
            rotation_max: pose.rvec,
            center_min: c,
            center_max: c,
        }
    }

    fn lerp(&self, t: [f64; 6]) -> (Vector3<f64>, Vector3<f64>) {
        let r = Vector3::from_fn(|k, _| {
            self.rotation_min[k] + t[k] * (self.rotation_max[k] - self.rotation_min[k])
        });
        let c = Vector3::from_fn(|k, _| {
            self.center_min[k] + t[k + 3] * (self.center_max[k] - self.center_min[k])
        });
        (r, c)
    }
}

/// Lateral extent (x, y at the board centre) of points between `zmin` and
/// `zmax` that both cameras see.
fn overlap_extent(
    rig: &StereoRig,
    zmin: f64,
    zmax: f64,
    margin: f64,
) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let cam = &rig.left;
    let right_abs = compose_right_extrinsics(&rig.relative, &Pose::identity());
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    const N: usize = 24;
    for iz in 0..=4 {
        let z = zmin + (zmax - zmin) * iz as f64 / 4.0;
        for iu in 0..=N {
            for iv in 0..=N {
                let px = Vector2::new(
                    cam.width as f64 * iu as f64 / N as f64,
                    cam.height as f64 * iv as f64 / N as f64,
                );
                let x = cam.from_pixel(&px);
                let q = Vector3::new(x.x * z, x.y * z, z);
                let Ok(pr) = rig.right.project_camera_point(&right_abs.transform(&q)) else {
                    continue;
                };
                if rig.right.in_image(&pr, margin) {
                    lo = lo.inf(&q.xy());
                    hi = hi.sup(&q.xy());
                }
            }
        }
    }
    lo.x.is_finite().then_some((lo, hi))
}

fn pose_from_center(rvec: Vector3<f64>, center: Vector3<f64>, board: &BoardSpec) -> Pose {
    let r = rotation_from_axis_angle(&rvec);
    Pose::new(rvec, center - r * board.center())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform random candidates, stopped early on a relative improvement
    /// of at most `rel_tol`.
    #[default]
    Random,
    /// Exhaustive lattice over the bounds; `steps` per axis in the order
    /// `(rx, ry, rz, cx, cy, cz)`. No early stop.
    Grid { steps: [usize; 6] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_iterations: usize,
    pub rel_tol: f64,
    /// `None` derives the box from the captured views.
    pub bounds: Option<SearchBounds>,
    pub seed: u64,
    pub sampling: Sampling,
    pub margin_px: f64,
    pub weights: [f64; 6],
    pub jacobian: JacobianSettings,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_tol: 1e-6,
            bounds: None,
            seed: 0,
            sampling: Sampling::Random,
            margin_px: DEFAULT_MARGIN_PX,
            weights: UNIT_WEIGHTS,
            jacobian: JacobianSettings::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        if let Sampling::Grid { steps } = &self.sampling {
            if steps.iter().any(|&s| s == 0) {
                return Err(Error::InvalidConfig("grid steps must be >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidatePose {
    pub pose: Pose,
    pub trace: f64,
    pub visible: bool,
}

/// Result of a search with bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: CandidatePose,
    /// Candidates generated before termination.
    pub iterations: usize,
    /// Candidates that passed the visibility test.
    pub feasible: usize,
    /// Trace of the covariance without the extra view, if defined.
    pub current_trace: Option<f64>,
}

/// True when every corner projects inside both images (shrunk by `margin`)
/// and lies in front of both cameras.
pub fn is_visible(pose: &Pose, rig: &StereoRig, board: &BoardSpec, margin: f64) -> bool {
    let right_abs = compose_right_extrinsics(&rig.relative, pose);
    board.corners().iter().all(|p| {
        let ok_l = rig
            .left
            .project_camera_point(&pose.transform(p))
            .is_ok_and(|px| rig.left.in_image(&px, margin));
        ok_l && rig
            .right
            .project_camera_point(&right_abs.transform(p))
            .is_ok_and(|px| rig.right.in_image(&px, margin))
    })
}

struct Evaluator<'a> {
    state: &'a PlanningState,
    base: Matrix6<f64>,
    cfg: &'a SearchConfig,
}

impl Evaluator<'_> {
    fn trace(&self, pose: &Pose) -> Option<f64> {
        if !is_visible(pose, &self.state.rig, &self.state.board, self.cfg.margin_px) {
            return None;
        }
        let info = view_info(
            &self.state.rig,
            &self.state.board,
            pose,
            self.cfg.jacobian.mode(),
        )
        .ok()?;
        let reduced = self.base + info.reduced().ok()?;
        let report = covariance_from_reduced(&reduced).ok()?;
        let t = trace_objective(&report, &self.cfg.weights);
        t.is_finite().then_some(t)
    }
}

fn grid_candidates(
    bounds: &SearchBounds,
    steps: [usize; 6],
    board: &BoardSpec,
    limit: usize,
) -> Vec<Pose> {
    let total: usize = steps.iter().product();
    (0..total.min(limit))
        .map(|mut idx| {
            let mut t = [0.0; 6];
            for axis in (0..6).rev() {
                let k = idx % steps[axis];
                idx /= steps[axis];
                t[axis] = if steps[axis] == 1 {
                    0.5
                } else {
                    k as f64 / (steps[axis] - 1) as f64
                };
            }
            let (r, c) = bounds.lerp(t);
            pose_from_center(r, c, board)
        })
        .collect()
}

fn random_candidate(bounds: &SearchBounds, board: &BoardSpec, rng: &mut ChaCha8Rng) -> Pose {
    let t: [f64; 6] = std::array::from_fn(|_| rng.random::<f64>());
    let (r, c) = bounds.lerp(t);
    pose_from_center(r, c, board)
}

/// Searches for the board pose minimizing the post-capture covariance trace.
pub fn search(state: &PlanningState, cfg: &SearchConfig) -> Result<SearchOutcome> {
    cfg.validate()?;
    if state.view_poses.is_empty() {
        return Err(Error::InsufficientViews { needed: 1, got: 0 });
    }
    let bounds = match cfg.bounds {
        Some(b) => b,
        None => SearchBounds::around_views(state, cfg.margin_px)?,
    };
    let base = state.reduced_information(cfg.jacobian.mode())?;
    let current_trace = covariance_from_reduced(&base)
        .ok()
        .map(|r| trace_objective(&r, &cfg.weights));
    let eval = Evaluator { state, base, cfg };

    let mut best: Option<CandidatePose> = None;
    let mut iterations = 0;
    let mut feasible = 0;

    match cfg.sampling {
        Sampling::Grid { steps } => {
            let poses = grid_candidates(&bounds, steps, &state.board, cfg.max_iterations);
            let traces: Vec<Option<f64>> = poses.par_iter().map(|p| eval.trace(p)).collect();
            iterations = poses.len();
            for (pose, trace) in poses.iter().zip(traces) {
                if let Some(t) = trace {
                    feasible += 1;
                    if best.is_none_or(|b| t < b.trace) {
                        best = Some(CandidatePose {
                            pose: *pose,
                            trace: t,
                            visible: true,
                        });
                    }
                }
            }
        }
        Sampling::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            'outer: while iterations < cfg.max_iterations {
                let batch = EVAL_BATCH.min(cfg.max_iterations - iterations);
                let poses: Vec<Pose> = (0..batch)
                    .map(|_| random_candidate(&bounds, &state.board, &mut rng))
                    .collect();
                let traces: Vec<Option<f64>> = poses.par_iter().map(|p| eval.trace(p)).collect();
                for (pose, trace) in poses.iter().zip(traces) {
                    iterations += 1;
                    let Some(t) = trace else { continue };
                    feasible += 1;
                    match best {
                        None => {
                            best = Some(CandidatePose {
                                pose: *pose,
                                trace: t,
                                visible: true,
                            })
                        }
                        Some(b) if t < b.trace => {
                            best = Some(CandidatePose {
                                pose: *pose,
                                trace: t,
                                visible: true,
                            });
                            if (b.trace - t) / b.trace <= cfg.rel_tol {
                                break 'outer;
                            }
                        }
                        Some(_) => {}
                    }
                }
            }
        }
    }

    let best = best.ok_or(Error::NoFeasibleCandidate { iterations })?;
    Ok(SearchOutcome {
        best,
        iterations,
        feasible,
        current_trace,
    })
}

/// The pose whose capture would most reduce the relative-pose covariance trace.
pub fn next_optimal_pose(state: &PlanningState, cfg: &SearchConfig) -> Result<CandidatePose> {
    search(state, cfg).map(|o| o.best)
}

/// Constraints of the random-pose baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomPoseConstraints {
    /// Per-axis axis-angle half range (rad).
    pub rotation_range: f64,
    /// Target fraction of the overlap grid covered by the pose history.
    pub coverage_target: f64,
    /// Minimum angle between board normal and either optical axis (rad).
    pub normal_alignment_min_angle: f64,
    /// Board-centre depth range in the left camera frame (mm).
    pub depth_range_mm: [f64; 2],
    pub margin_px: f64,
    /// While coverage is below target, the best of this many feasible draws
    /// (by newly covered cells) is returned.
    pub coverage_candidates: usize,
    pub max_attempts: usize,
}

impl Default for RandomPoseConstraints {
    fn default() -> Self {
        Self {
            rotation_range: 30f64.to_radians(),
            coverage_target: 0.9,
            normal_alignment_min_angle: 5f64.to_radians(),
            depth_range_mm: [500.0, 1500.0],
            margin_px: DEFAULT_MARGIN_PX,
            coverage_candidates: 4,
            max_attempts: 10_000,
        }
    }
}

impl RandomPoseConstraints {
    pub fn validate(&self) -> Result<()> {
        if !(self.coverage_target > 0.0 && self.coverage_target <= 1.0) {
            return Err(Error::InvalidConfig(
                "coverage_target must be in (0, 1]".into(),
            ));
        }
        let [lo, hi] = self.depth_range_mm;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidConfig(
                "depth_range_mm must be positive and ordered".into(),
            ));
        }
        if self.rotation_range < 0.0 || self.normal_alignment_min_angle < 0.0 {
            return Err(Error::InvalidConfig("angles must be non-negative".into()));
        }
        Ok(())
    }
}

/// Angle between two lines (direction sign ignored), in `[0, π/2]`.
fn line_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b).abs())
}

fn satisfies_alignment(pose: &Pose, rig: &StereoRig, min_angle: f64) -> bool {
    let normal = pose.rotation() * Vector3::z();
    line_angle(&normal, &Vector3::z()) >= min_angle
        && line_angle(&normal, &rig.right_axis()) >= min_angle
}

/// Draws a constrained random board pose.
pub fn random_pose<R: Rng + ?Sized>(
    constraints: &RandomPoseConstraints,
    rig: &StereoRig,
    board: &BoardSpec,
    history: &[Pose],
    rng: &mut R,
) -> Result<Pose> {
    constraints.validate()?;
    let cam = &rig.left;
    let [zlo, zhi] = constraints.depth_range_mm;
    let want = if coverage_fraction(history, rig, board) < constraints.coverage_target {
        constraints.coverage_candidates.max(1)
    } else {
        1
    };
    let grid = (want > 1).then(|| CoverageGrid::new(rig));
    let covered = grid.as_ref().map(|g| g.covered(history, rig, board));

    let mut best: Option<(usize, Pose)> = None;
    let mut found = 0;
    for _ in 0..constraints.max_attempts {
        let rvec =
            Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0) * constraints.rotation_range);
        let z = zlo + (zhi - zlo) * rng.random::<f64>();
        let px = Vector2::new(
            rng.random::<f64>() * cam.width as f64,
            rng.random::<f64>() * cam.height as f64,
        );
        let x = cam.from_pixel(&px);
        let pose = pose_from_center(rvec, Vector3::new(x.x * z, x.y * z, z), board);
        if !is_visible(&pose, rig, board, constraints.margin_px)
            || !satisfies_alignment(&pose, rig, constraints.normal_alignment_min_angle)
        {
            continue;
        }
        found += 1;
        let gain = match (&grid, &covered) {
            (Some(g), Some(cov)) => g
                .footprint(&pose, rig, board)
                .iter()
                .zip(cov)
                .filter(|(f, c)| **f && !**c)
                .count(),
            _ => 0,
        };
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, pose));
        }
        if found >= want {
            break;
        }
    }
    best.map(|(_, p)| p).ok_or(Error::ConstraintUnsatisfiable {
        attempts: constraints.max_attempts,
    })
}

/// Cell grid over the left image used to measure field-of-view coverage.
#[derive(Debug, Clone)]
pub struct CoverageGrid {
    pub nx: usize,
    pub ny: usize,
    width: f64,
    height: f64,
    /// Cells whose centre ray reaches the right camera's image.
    in_overlap: Vec<bool>,
}

impl CoverageGrid {
    pub const DEFAULT_CELLS: usize = 32;

    pub fn new(rig: &StereoRig) -> Self {
        Self::with_cells(rig, Self::DEFAULT_CELLS, Self::DEFAULT_CELLS)
    }

    pub fn with_cells(rig: &StereoRig, nx: usize, ny: usize) -> Self {
        let cam = &rig.left;
        let (width, height) = (cam.width as f64, cam.height as f64);
        let right_abs = compose_right_extrinsics(&rig.relative, &Pose::identity());
        let mut in_overlap = vec![false; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let px = Vector2::new(
                    (ix as f64 + 0.5) * width / nx as f64,
                    (iy as f64 + 0.5) * height / ny as f64,
                );
                let Ok(x) = cam.unproject(&px) else { continue };
                in_overlap[iy * nx + ix] = (0..60).any(|k| {
                    let z = 50.0 * 1.1f64.powi(k);
                    let q = Vector3::new(x.x * z, x.y * z, z);
                    rig.right
                        .project_camera_point(&right_abs.transform(&q))
                        .is_ok_and(|p| rig.right.in_image(&p, 0.0))
                });
            }
        }
        Self {
            nx,
            ny,
            width,
            height,
            in_overlap,
        }
    }

    pub fn overlap_cells(&self) -> usize {
        self.in_overlap.iter().filter(|&&b| b).count()
    }

    /// Cells touched by the board's projected outline in the left image.
    pub fn footprint(&self, pose: &Pose, rig: &StereoRig, board: &BoardSpec) -> Vec<bool> {
        let mut cells = vec![false; self.nx * self.ny];
        let (w, h) = (
            (board.rows - 1) as f64 * board.spacing,
            (board.cols - 1) as f64 * board.spacing,
        );
        let outline: Vec<Vector2<f64>> = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]]
            .iter()
            .filter_map(|[x, y]| {
                rig.left
                    .project_camera_point(&pose.transform(&Vector3::new(*x, *y, 0.0)))
                    .ok()
            })
            .collect();
        if outline.len() < 4 {
            return cells;
        }
        let cw = self.width / self.nx as f64;
        let ch = self.height / self.ny as f64;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let x0 = ix as f64 * cw;
                let y0 = iy as f64 * ch;
                let corner_inside = outline
                    .iter()
                    .any(|p| p.x >= x0 && p.x < x0 + cw && p.y >= y0 && p.y < y0 + ch);
                let sample_inside = (0..3).any(|a| {
                    (0..3).any(|b| {
                        let s = Vector2::new(
                            x0 + (a as f64 + 0.5) * cw / 3.0,
                            y0 + (b as f64 + 0.5) * ch / 3.0,
                        );
                        point_in_convex(&outline, &s)
                    })
                });
                cells[iy * self.nx + ix] = corner_inside || sample_inside;
            }
        }
        cells
    }

    /// Union of footprints over `history`, restricted to overlap cells.
    pub fn covered(&self, history: &[Pose], rig: &StereoRig, board: &BoardSpec) -> Vec<bool> {
        let mut cov = vec![false; self.nx * self.ny];
        for pose in history {
            for (c, f) in cov.iter_mut().zip(self.footprint(pose, rig, board)) {
                *c |= f;
            }
        }
        for (c, o) in cov.iter_mut().zip(&self.in_overlap) {
            *c &= *o;
        }
        cov
    }

    pub fn fraction(&self, history: &[Pose], rig: &StereoRig, board: &BoardSpec) -> f64 {
        let total = self.overlap_cells();
        if total == 0 {
            return 0.0;
        }
        self.covered(history, rig, board)
            .iter()
            .filter(|&&c| c)
            .count() as f64
            / total as f64
    }
}

fn point_in_convex(poly: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    let mut sign = 0.0;
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if cross != 0.0 {
            if sign != 0.0 && cross.signum() != sign {
                return false;
            }
            sign = cross.signum();
        }
    }
    true
}

/// Fraction of the left image's overlap cells (32×32 grid) touched by any
/// board footprint in `history`.
pub fn coverage_fraction(history: &[Pose], rig: &StereoRig, board: &BoardSpec) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    CoverageGrid::new(rig).fraction(history, rig, board)
}
