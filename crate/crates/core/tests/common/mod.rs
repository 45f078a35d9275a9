//! Independent oracles shared by the integration tests: finite-difference
//! Jacobians, a dense `JᵀJ` built row by row, and random rig/pose generators.
#![allow(dead_code)]

use calibguide::geometry::{BoardSpec, CameraModel, Pose, StereoRig};
use calibguide::jacobian::{block_u, block_v, block_v_right, residuals, JacobianMode, ViewPair};
use calibguide::planner::{random_pose, PlanningState, RandomPoseConstraints, SearchBounds};
use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn reference_rig() -> StereoRig {
    calibguide::simharness::reference_rig()
}

/// Reference intrinsics with random distortion and a random relative pose
/// around the reference one.
pub fn random_rig<R: Rng>(rng: &mut R) -> StereoRig {
    let cam = |rng: &mut R| {
        CameraModel::pinhole(
            rng.random_range(600.0..1000.0),
            rng.random_range(600.0..1000.0),
            rng.random_range(300.0..340.0),
            rng.random_range(220.0..260.0),
            640,
            480,
        )
        .with_distortion([
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.01..0.01),
            rng.random_range(-0.01..0.01),
        ])
    };
    let left = cam(rng);
    let right = cam(rng);
    let rvec = Vector3::new(
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.4..-0.2),
        rng.random_range(-0.05..0.05),
    );
    let tvec = Vector3::new(
        rng.random_range(300.0..500.0),
        rng.random_range(-20.0..20.0),
        rng.random_range(-50.0..50.0),
    );
    StereoRig {
        left,
        right,
        relative: Pose::new(rvec, tvec),
    }
}

pub fn random_visible_pose<R: Rng>(rng: &mut R, rig: &StereoRig, board: &BoardSpec) -> Pose {
    random_pose(&RandomPoseConstraints::default(), rig, board, &[], rng).expect("visible pose")
}

/// Applies a tangent increment along coordinate `k` of size `h`.
fn nudged(pose: &Pose, k: usize, h: f64) -> Pose {
    let mut d = Vector6::zeros();
    d[k] = h;
    pose.retract(&d)
}

/// Central differences of the stacked residuals (left rows, then right rows)
/// w.r.t. the view's left absolute pose. `4n × 6`.
pub fn fd_wrt_left(view: &ViewPair, rig: &StereoRig) -> DMatrix<f64> {
    let n = 4 * view.board.corner_count();
    let mut j = DMatrix::zeros(n, 6);
    for k in 0..6 {
        let plus = residuals(&view.with_left_abs(nudged(&view.left_abs, k, FD_STEP)), rig)
            .unwrap()
            .stacked();
        let minus = residuals(
            &view.with_left_abs(nudged(&view.left_abs, k, -FD_STEP)),
            rig,
        )
        .unwrap()
        .stacked();
        j.set_column(k, &((plus - minus) / (2.0 * FD_STEP)));
    }
    j
}

/// Central differences of the stacked residuals w.r.t. the relative pose.
pub fn fd_wrt_relative(view: &ViewPair, rig: &StereoRig) -> DMatrix<f64> {
    let n = 4 * view.board.corner_count();
    let mut j = DMatrix::zeros(n, 6);
    for k in 0..6 {
        let plus = residuals(view, &rig.with_relative(nudged(&rig.relative, k, FD_STEP)))
            .unwrap()
            .stacked();
        let minus = residuals(view, &rig.with_relative(nudged(&rig.relative, k, -FD_STEP)))
            .unwrap()
            .stacked();
        j.set_column(k, &((plus - minus) / (2.0 * FD_STEP)));
    }
    j
}

pub fn frobenius_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Dense stacked Jacobian over `[relative | pose_1 | … | pose_m]`.
///
/// `Printed` shares one `2n`-row block per view between `Uᵢ` and `Vᵢ`;
/// `FullChain` gives each view `4n` rows: left residuals (`Vᵢ` only) and
/// right residuals (`Uᵢ` and the right-on-left block).
pub fn dense_jacobian(views: &[ViewPair], rig: &StereoRig, mode: JacobianMode) -> DMatrix<f64> {
    let m = views.len();
    let rows_per: Vec<usize> = views
        .iter()
        .map(|v| match mode {
            JacobianMode::Printed => 2 * v.board.corner_count(),
            JacobianMode::FullChain => 4 * v.board.corner_count(),
        })
        .collect();
    let mut j = DMatrix::zeros(rows_per.iter().sum(), 6 + 6 * m);
    let mut row = 0;
    for (i, v) in views.iter().enumerate() {
        let u = block_u(v, rig).unwrap();
        let vl = block_v(v, rig).unwrap();
        let h = u.nrows();
        match mode {
            JacobianMode::Printed => {
                j.view_mut((row, 0), (h, 6)).copy_from(&u);
                j.view_mut((row, 6 + 6 * i), (h, 6)).copy_from(&vl);
            }
            JacobianMode::FullChain => {
                let vr = block_v_right(v, rig).unwrap();
                j.view_mut((row, 6 + 6 * i), (h, 6)).copy_from(&vl);
                j.view_mut((row + h, 0), (h, 6)).copy_from(&u);
                j.view_mut((row + h, 6 + 6 * i), (h, 6)).copy_from(&vr);
            }
        }
        row += rows_per[i];
    }
    j
}

/// Top-left 6×6 of the dense `(JᵀJ)⁻¹`, from a QR factorization of the
/// column-scaled `J` (avoids squaring its condition number).
pub fn dense_relative_covariance(
    views: &[ViewPair],
    rig: &StereoRig,
    mode: JacobianMode,
) -> Matrix6<f64> {
    let j = dense_jacobian(views, rig, mode);
    let d = DVector::from_iterator(j.ncols(), j.column_iter().map(|c| 1.0 / c.norm()));
    let scaled = DMatrix::from_fn(j.nrows(), j.ncols(), |r, c| j[(r, c)] * d[c]);
    let r = scaled.qr().r();
    let r_inv = r
        .try_inverse()
        .expect("dense Jacobian has full column rank");
    let inv = &r_inv * r_inv.transpose();
    Matrix6::from_fn(|a, b| d[a] * inv[(a, b)] * d[b])
}

/// Largest entrywise deviation, each entry scaled by `√(bᵢᵢ bⱼⱼ)` so the
/// comparison is unit-free across the rad/mm blocks.
pub fn covariance_rel_err(a: &Matrix6<f64>, b: &Matrix6<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..6 {
        for c in 0..6 {
            let scale = (b[(r, r)] * b[(c, c)]).sqrt();
            worst = worst.max((a[(r, c)] - b[(r, c)]).abs() / scale);
        }
    }
    worst
}

/// Plain dense trace oracle for a set of board poses.
pub fn dense_trace(rig: &StereoRig, board: &BoardSpec, poses: &[Pose], mode: JacobianMode) -> f64 {
    let views: Vec<ViewPair> = poses
        .iter()
        .map(|p| ViewPair::exact(rig, board, p).unwrap())
        .collect();
    dense_relative_covariance(&views, rig, mode).trace()
}

/// All corners in front of both cameras and inside both images shrunk by
/// `margin`, computed directly from the projection model.
pub fn visible_oracle(pose: &Pose, rig: &StereoRig, board: &BoardSpec, margin: f64) -> bool {
    let r = rig.relative.rotation() * pose.rotation();
    let right = Pose::from_matrix(&r, rig.relative.rotation() * pose.tvec + rig.relative.tvec);
    board.corners().iter().all(|p| {
        [(pose, &rig.left), (&right, &rig.right)]
            .iter()
            .all(|(ps, cam)| {
                let q = ps.transform(p);
                if q.z <= 0.0 {
                    return false;
                }
                let Ok(px) = cam.project_camera_point(&q) else {
                    return false;
                };
                px.x >= margin
                    && px.y >= margin
                    && px.x <= cam.width as f64 - margin
                    && px.y <= cam.height as f64 - margin
            })
    })
}

/// Lattice poses over `bounds` with `steps` per axis `(rx, ry, rz, cx, cy, cz)`,
/// the last axis varying fastest; board centre placed at the lattice point.
pub fn lattice(bounds: &SearchBounds, steps: [usize; 6], board: &BoardSpec) -> Vec<Pose> {
    let coord = |axis: usize, k: usize| {
        let t = if steps[axis] == 1 {
            0.5
        } else {
            k as f64 / (steps[axis] - 1) as f64
        };
        let (lo, hi) = if axis < 3 {
            (bounds.rotation_min[axis], bounds.rotation_max[axis])
        } else {
            (bounds.center_min[axis - 3], bounds.center_max[axis - 3])
        };
        lo + t * (hi - lo)
    };
    let mut out = Vec::new();
    for a in 0..steps[0] {
        for b in 0..steps[1] {
            for c in 0..steps[2] {
                for d in 0..steps[3] {
                    for e in 0..steps[4] {
                        for f in 0..steps[5] {
                            let rvec = Vector3::new(coord(0, a), coord(1, b), coord(2, c));
                            let centre = Vector3::new(coord(3, d), coord(4, e), coord(5, f));
                            let r = calibguide::geometry::rotation_from_axis_angle(&rvec);
                            out.push(Pose::new(rvec, centre - r * board.center()));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Exhaustive oracle: dense trace of every visible lattice pose appended to
/// the state's views. Returns `(pose, trace)` pairs (`None` when hidden).
pub fn lattice_traces(
    state: &PlanningState,
    poses: &[Pose],
    margin: f64,
    mode: JacobianMode,
) -> Vec<Option<f64>> {
    poses
        .iter()
        .map(|p| {
            visible_oracle(p, &state.rig, &state.board, margin).then(|| {
                let mut all = state.view_poses.clone();
                all.push(*p);
                dense_trace(&state.rig, &state.board, &all, mode)
            })
        })
        .collect()
}
