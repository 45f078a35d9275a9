//! Stereo bundle adjustment over the relative pose and per-view left poses.
//!
//! Right-camera poses are never free parameters: they are always
//! `(R·Rᵢˡ, R·tᵢˡ + t)`. The damped normal equations share the block layout of
//! the information matrix, so each iteration eliminates the per-view blocks
//! with 6×6 solves and only inverts a 6×6 reduced system.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix6, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use super::{CalibrationDataset, CalibrationResult};
use crate::covariance::relative_covariance;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::jacobian::{assemble_info, corner_jacobian, JacobianMode};

pub const MAX_ITERATIONS: usize = 100;
pub const COST_TOL: f64 = 1e-10;
pub const MAX_ESCALATIONS: usize = 10;
const INITIAL_LAMBDA: f64 = 1e-3;
/// Keeps ten escalations enough to reach a heavily damped step.
const MIN_LAMBDA: f64 = 1e-7;
const ABSOLUTE_COST_FLOOR: f64 = 1e-20;
/// Rounding error of one reprojection residual, pixel coordinates being in
/// the hundreds.
const RESIDUAL_ROUNDING_PX: f64 = 1e3 * f64::EPSILON;

/// Loss `ρ` applied to each corner's squared reprojection distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobustKernel {
    /// `ρ(s) = s`.
    Quadratic,
    /// `ρ(s) = s` for `√s ≤ δ`, `2δ√s − δ²` beyond.
    Huber { threshold: f64 },
}

/// Huber at 1 px.
impl Default for RobustKernel {
    fn default() -> Self {
        RobustKernel::Huber { threshold: 1.0 }
    }
}

impl RobustKernel {
    pub fn rho(&self, s: f64) -> f64 {
        match *self {
            RobustKernel::Quadratic => s,
            RobustKernel::Huber { threshold: d } => {
                if s <= d * d {
                    s
                } else {
                    2.0 * d * s.sqrt() - d * d
                }
            }
        }
    }

    /// `ρ'(s)`, the IRLS weight.
    pub fn weight(&self, s: f64) -> f64 {
        match *self {
            RobustKernel::Quadratic => 1.0,
            RobustKernel::Huber { threshold: d } => {
                if s <= d * d {
                    1.0
                } else {
                    d / s.sqrt()
                }
            }
        }
    }
}

impl FromStr for RobustKernel {
    type Err = Error;

    /// Accepts `quadratic`, `identity`, `huber` or `huber:<px>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
        match (name.trim(), arg) {
            ("quadratic" | "identity" | "none", None) => Ok(RobustKernel::Quadratic),
            ("huber", None) => Ok(RobustKernel::Huber { threshold: 1.0 }),
            ("huber", Some(v)) => {
                let threshold: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad huber threshold '{v}'")))?;
                if threshold > 0.0 {
                    Ok(RobustKernel::Huber { threshold })
                } else {
                    Err(Error::InvalidConfig(
                        "huber threshold must be positive".into(),
                    ))
                }
            }
            _ => Err(Error::InvalidConfig(format!("unknown kernel '{s}'"))),
        }
    }
}

impl fmt::Display for RobustKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobustKernel::Quadratic => write!(f, "quadratic"),
            RobustKernel::Huber { threshold } => write!(f, "huber:{threshold}"),
        }
    }
}

struct Normal {
    a: Matrix6<f64>,
    ga: Vector6<f64>,
    b: Vec<Matrix6<f64>>,
    c: Vec<Matrix6<f64>>,
    gb: Vec<Vector6<f64>>,
}

struct Problem<'a> {
    dataset: &'a CalibrationDataset,
    kernel: RobustKernel,
}

impl Problem<'_> {
    fn cost(&self, relative: &Pose, poses: &[Pose]) -> f64 {
        let rig = self.dataset.rig(*relative);
        let mut total = 0.0;
        for (view, pose) in self.dataset.views.iter().zip(poses) {
            let right = relative.compose(pose);
            for (j, p) in view.board.corners().iter().enumerate() {
                let (Ok(pl), Ok(pr)) = (
                    rig.left.project_camera_point(&pose.transform(p)),
                    rig.right.project_camera_point(&right.transform(p)),
                ) else {
                    return f64::INFINITY;
                };
                total += self.kernel.rho((view.left_pixels[j] - pl).norm_squared());
                total += self.kernel.rho((view.right_pixels[j] - pr).norm_squared());
            }
        }
        total
    }

    fn normal_equations(&self, relative: &Pose, poses: &[Pose]) -> Result<Normal> {
        let rig = self.dataset.rig(*relative);
        let r_rel = relative.rotation();
        let m = poses.len();
        let mut n = Normal {
            a: Matrix6::zeros(),
            ga: Vector6::zeros(),
            b: vec![Matrix6::zeros(); m],
            c: vec![Matrix6::zeros(); m],
            gb: vec![Vector6::zeros(); m],
        };
        for (i, (view, pose)) in self.dataset.views.iter().zip(poses).enumerate() {
            let rl = pose.rotation();
            for (j, p) in view.board.corners().iter().enumerate() {
                let cj = corner_jacobian(&rig, pose, &rl, &r_rel, p)?;
                let el: Vector2<f64> = view.left_pixels[j] - cj.left_pixel;
                let er: Vector2<f64> = view.right_pixels[j] - cj.right_pixel;
                let wl = self.kernel.weight(el.norm_squared());
                let wr = self.kernel.weight(er.norm_squared());
                let ut = cj.u_right.transpose();
                n.a += wr * ut * cj.u_right;
                n.ga += wr * ut * er;
                n.b[i] += wl * cj.v_left.transpose() * cj.v_left
                    + wr * cj.v_right.transpose() * cj.v_right;
                n.c[i] += wr * ut * cj.v_right;
                n.gb[i] += wl * cj.v_left.transpose() * el + wr * cj.v_right.transpose() * er;
            }
        }
        Ok(n)
    }
}

/// Total robust cost `Σ ρ(‖e‖²)` of a result over both cameras.
pub fn robust_cost(
    dataset: &CalibrationDataset,
    result: &CalibrationResult,
    kernel: RobustKernel,
) -> f64 {
    Problem { dataset, kernel }.cost(&result.relative, &result.per_view_left_abs)
}

fn damp(m: &Matrix6<f64>, lambda: f64) -> Matrix6<f64> {
    let mut out = *m;
    for k in 0..6 {
        out[(k, k)] += lambda * m[(k, k)].max(1e-9);
    }
    out
}

/// Solves the damped system `(H + λ·diag H)·δ = −g` by eliminating the
/// per-view blocks.
fn solve_step(n: &Normal, lambda: f64) -> Option<(Vector6<f64>, Vec<Vector6<f64>>)> {
    let mut s = damp(&n.a, lambda);
    let mut rhs = -n.ga;
    let mut chols = Vec::with_capacity(n.b.len());
    for ((b, c), gb) in n.b.iter().zip(&n.c).zip(&n.gb) {
        let chol = damp(b, lambda).cholesky()?;
        s -= c * chol.solve(&c.transpose());
        rhs += c * chol.solve(gb);
        chols.push(chol);
    }
    let s = (s + s.transpose()) * 0.5;
    let da = s.cholesky()?.solve(&rhs);
    let db = chols
        .iter()
        .zip(&n.c)
        .zip(&n.gb)
        .map(|((chol, c), gb)| chol.solve(&(-gb - c.transpose() * da)))
        .collect();
    Some((da, db))
}

/// How far two evaluations of the same cost can differ from rounding alone.
fn cost_resolution(cost: f64, coords: f64) -> f64 {
    2.0 * (cost * coords).sqrt() * RESIDUAL_ROUNDING_PX
}

/// Jointly refines the relative pose and all left absolute poses.
pub fn bundle_adjust(
    dataset: &CalibrationDataset,
    init: &CalibrationResult,
    kernel: RobustKernel,
) -> Result<CalibrationResult> {
    bundle_adjust_with(dataset, init, kernel, MAX_ITERATIONS)
}

/// [`bundle_adjust`] with an explicit iteration cap.
pub fn bundle_adjust_with(
    dataset: &CalibrationDataset,
    init: &CalibrationResult,
    kernel: RobustKernel,
    max_iterations: usize,
) -> Result<CalibrationResult> {
    dataset.validate()?;
    if dataset.views.len() < 2 {
        return Err(Error::InsufficientViews {
            needed: 2,
            got: dataset.views.len(),
        });
    }
    if init.per_view_left_abs.len() != dataset.views.len() {
        return Err(Error::DimensionMismatch(
            "initial poses do not match view count".into(),
        ));
    }
    let problem = Problem { dataset, kernel };
    let mut relative = init.relative;
    let mut poses = init.per_view_left_abs.clone();
    let mut cost = problem.cost(&relative, &poses);
    if !cost.is_finite() {
        return Err(Error::BehindCamera { depth: f64::NAN });
    }
    let coords = (4 * dataset.views.len() * dataset.board.corner_count()) as f64;
    let mut lambda = INITIAL_LAMBDA;
    let mut iterations = 0;

    'outer: while iterations < max_iterations && cost > ABSOLUTE_COST_FLOOR {
        iterations += 1;
        let normal = problem.normal_equations(&relative, &poses)?;
        let mut escalations = 0;
        loop {
            let candidate = solve_step(&normal, lambda).map(|(da, db)| {
                let rel = relative.retract(&da);
                let ps: Vec<Pose> = poses.iter().zip(&db).map(|(p, d)| p.retract(d)).collect();
                let c = problem.cost(&rel, &ps);
                (rel, ps, c)
            });
            match candidate {
                Some((rel, ps, c)) if c <= cost => {
                    let change = (cost - c) / cost;
                    relative = rel;
                    poses = ps;
                    cost = c;
                    lambda = (lambda / 10.0).max(MIN_LAMBDA);
                    if change < COST_TOL {
                        break 'outer;
                    }
                    break;
                }
                Some((_, _, c))
                    if c.is_finite()
                        && (c - cost) <= COST_TOL * cost + cost_resolution(cost, coords) =>
                {
                    // Rejected, but indistinguishable from the current cost.
                    break 'outer;
                }
                _ => {
                    lambda *= 10.0;
                    escalations += 1;
                    if escalations >= MAX_ESCALATIONS {
                        return Err(Error::DivergedOptimization { escalations });
                    }
                }
            }
        }
    }

    let mut result = CalibrationResult {
        relative,
        per_view_left_abs: poses,
        rms_reproj: 0.0,
        covariance: None,
        iterations,
    };
    result.rms_reproj = super::reprojection_error_stats(dataset, &result)?.rms;
    let views: Vec<_> = dataset
        .views
        .iter()
        .zip(&result.per_view_left_abs)
        .map(|(v, p)| v.with_left_abs(*p))
        .collect();
    result.covariance = assemble_info(&views, &dataset.rig(relative), JacobianMode::Printed)
        .and_then(|info| relative_covariance(&info))
        .ok();
    Ok(result)
}
