//! Calibration pipeline: PnP initialization, relative-pose initialization,
//! stereo bundle adjustment and the accuracy metrics used to judge it.

mod bundle;
mod metrics;
mod pnp;

use nalgebra::{Matrix3, Quaternion, Rotation3, SMatrix, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub use bundle::{
    bundle_adjust, bundle_adjust_with, robust_cost, RobustKernel, COST_TOL, MAX_ESCALATIONS,
    MAX_ITERATIONS,
};
pub use metrics::{
    reprojection_error_stats, rotation_error, translation_error, triangulation_error_stats,
    ReprojectionStats,
};
pub use pnp::{solve_pnp, solve_pnp_points};

use crate::covariance::CovarianceReport;
use crate::error::{Error, Result};
use crate::geometry::{triangulate_normalized, BoardSpec, CameraModel, Pose, StereoRig};
use crate::jacobian::ViewPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDataset {
    pub left: CameraModel,
    pub right: CameraModel,
    pub board: BoardSpec,
    pub views: Vec<ViewPair>,
}

impl CalibrationDataset {
    pub fn validate(&self) -> Result<()> {
        self.left.validate()?;
        self.right.validate()?;
        self.board.validate()?;
        for v in &self.views {
            if v.board != self.board {
                return Err(Error::InvalidConfig(
                    "view board differs from dataset board".into(),
                ));
            }
            v.validate()?;
        }
        Ok(())
    }

    pub fn rig(&self, relative: Pose) -> StereoRig {
        StereoRig {
            left: self.left,
            right: self.right,
            relative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub relative: Pose,
    pub per_view_left_abs: Vec<Pose>,
    /// RMS of per-corner Euclidean reprojection distances (px).
    pub rms_reproj: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceReport>,
    /// Bundle-adjustment iterations performed.
    #[serde(default)]
    pub iterations: usize,
}

impl CalibrationResult {
    pub fn new(relative: Pose, per_view_left_abs: Vec<Pose>) -> Self {
        Self {
            relative,
            per_view_left_abs,
            rms_reproj: 0.0,
            covariance: None,
            iterations: 0,
        }
    }
}

/// Relative pose from two absolute poses of the same board:
/// `R = Rʳ·(Rˡ)ᵀ`, `t = tʳ − R·tˡ`.
pub fn init_relative(left_abs: &Pose, right_abs: &Pose) -> Pose {
    let r = right_abs.rotation() * left_abs.rotation().transpose();
    Pose::from_matrix(&r, right_abs.tvec - r * left_abs.tvec)
}

/// Averages per-view relative poses: rotations in quaternion space (signs
/// aligned to the first), translations arithmetically.
pub fn relative_from_monocular(views: &[(Pose, Pose)]) -> Result<Pose> {
    let first = views
        .first()
        .ok_or(Error::InsufficientViews { needed: 1, got: 0 })?;
    let relatives: Vec<Pose> = views.iter().map(|(l, r)| init_relative(l, r)).collect();
    let quat = |p: &Pose| {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(p.rotation()))
    };
    let reference = quat(&init_relative(&first.0, &first.1));
    let mut sum = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    let mut t = Vector3::zeros();
    for rel in &relatives {
        let q = quat(rel).into_inner();
        sum += if q.dot(reference.quaternion()) < 0.0 {
            -q
        } else {
            q
        };
        t += rel.tvec;
    }
    let mean = UnitQuaternion::from_quaternion(sum);
    Ok(Pose::new(mean.scaled_axis(), t / relatives.len() as f64))
}

/// Per-view monocular PnP for both cameras.
pub fn monocular_poses(dataset: &CalibrationDataset) -> Result<Vec<(Pose, Pose)>> {
    dataset
        .views
        .iter()
        .map(|v| {
            Ok((
                solve_pnp(&dataset.board, &v.left_pixels, &dataset.left)?,
                solve_pnp(&dataset.board, &v.right_pixels, &dataset.right)?,
            ))
        })
        .collect()
}

/// Residual variance of a stereo fit relative to the noise variance implied by
/// the independent per-camera PnP fits, each normalized by its degrees of
/// freedom. Close to 1 for a calibration consistent with the data; well above
/// 1 when bundle adjustment settled in a wrong basin.
pub fn fit_consistency(
    dataset: &CalibrationDataset,
    result: &CalibrationResult,
    mono: &[(Pose, Pose)],
) -> Result<f64> {
    if mono.len() != dataset.views.len() || result.per_view_left_abs.len() != dataset.views.len() {
        return Err(Error::DimensionMismatch(
            "poses do not match view count".into(),
        ));
    }
    let mut sse_mono = 0.0;
    let mut coords = 0usize;
    for (view, (l, r)) in dataset.views.iter().zip(mono) {
        for (j, p) in view.board.corners().iter().enumerate() {
            sse_mono += (view.left_pixels[j]
                - dataset.left.project_camera_point(&l.transform(p))?)
            .norm_squared();
            sse_mono += (view.right_pixels[j]
                - dataset.right.project_camera_point(&r.transform(p))?)
            .norm_squared();
            coords += 4;
        }
    }
    let n = dataset.views.len();
    let dof_mono = coords.saturating_sub(12 * n).max(1) as f64;
    let dof_stereo = coords.saturating_sub(6 * n + 6).max(1) as f64;
    let sse_stereo = robust_cost(dataset, result, RobustKernel::Quadratic);
    const NOISE_FLOOR: f64 = 1e-12;
    Ok((sse_stereo / dof_stereo) / (sse_mono / dof_mono).max(NOISE_FLOOR))
}

/// Undistorted normalized coordinates of one view, left and right.
pub type ViewRays = (Vec<Vector2<f64>>, Vec<Vector2<f64>>);

pub fn view_rays(dataset: &CalibrationDataset, view: &ViewPair) -> Result<ViewRays> {
    let l = view
        .left_pixels
        .iter()
        .map(|p| dataset.left.unproject(p))
        .collect::<Result<Vec<_>>>()?;
    let r = view
        .right_pixels
        .iter()
        .map(|p| dataset.right.unproject(p))
        .collect::<Result<Vec<_>>>()?;
    Ok((l, r))
}

/// Rigid board-to-left-camera pose fitted (Kabsch) to the corners
/// triangulated under `rig`.
pub fn stereo_board_pose(rig: &StereoRig, view: &ViewPair) -> Result<Pose> {
    let l = view
        .left_pixels
        .iter()
        .map(|p| rig.left.unproject(p))
        .collect::<Result<Vec<_>>>()?;
    let r = view
        .right_pixels
        .iter()
        .map(|p| rig.right.unproject(p))
        .collect::<Result<Vec<_>>>()?;
    stereo_board_pose_from_rays(&rig.relative, &view.board, &(l, r))
}

/// [`stereo_board_pose`] from precomputed rays.
pub fn stereo_board_pose_from_rays(
    relative: &Pose,
    board: &BoardSpec,
    rays: &ViewRays,
) -> Result<Pose> {
    let corners = board.corners();
    let mut tri = Vec::with_capacity(corners.len());
    for (xl, xr) in rays.0.iter().zip(&rays.1) {
        tri.push(triangulate_normalized(relative, xl, xr)?);
    }
    let n = corners.len() as f64;
    let cp = corners.iter().sum::<Vector3<f64>>() / n;
    let cx = tri.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (p, x) in corners.iter().zip(&tri) {
        h += (x - cx) * (p - cp).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (
        svd.u.ok_or(Error::DegenerateConfiguration)?,
        svd.v_t.ok_or(Error::DegenerateConfiguration)?,
    );
    let d = (u * vt).determinant().signum();
    let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * vt;
    Ok(Pose::from_matrix(&r, cx - r * cp))
}

/// Relative pose from the essential matrix of all stereo correspondences
/// (linear eight-point on normalized rays), with the baseline scaled so the
/// triangulated boards have their true size. Independent of monocular PnP.
/// `None` when the correspondences do not determine a unique solution.
pub fn relative_from_essential(board: &BoardSpec, rays: &[ViewRays]) -> Option<Pose> {
    let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = rays
        .iter()
        .flat_map(|(l, r)| {
            l.iter()
                .zip(r)
                .map(|(a, b)| (Vector3::new(a.x, a.y, 1.0), Vector3::new(b.x, b.y, 1.0)))
        })
        .collect();
    if pairs.len() < 8 {
        return None;
    }
    // x_rᵀ E x_l = 0 with E = [t]× R.
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (xl, xr) in &pairs {
        let mut row = SMatrix::<f64, 9, 1>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                row[3 * i + j] = xr[i] * xl[j];
            }
        }
        ata += row * row.transpose();
    }
    let eig = ata.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let e = eig.eigenvectors.column(k);
    let e = Matrix3::new(e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8]);
    let svd = e.svd(true, true);
    let (mut u, mut vt) = (svd.u?, svd.v_t?);
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t_dir: Vector3<f64> = u.column(2).into();
    let mut best: Option<(usize, Pose)> = None;
    for r in [u * w * vt, u * w.transpose() * vt] {
        for t in [t_dir, -t_dir] {
            let pose = Pose::from_matrix(&r, t);
            let front = pairs
                .iter()
                .filter(|(xl, xr)| {
                    triangulate_normalized(&pose, &xl.xy(), &xr.xy())
                        .is_ok_and(|p| p.z > 0.0 && (r * p + t).z > 0.0)
                })
                .count();
            if best.as_ref().is_none_or(|(n, _)| front > *n) {
                best = Some((front, pose));
            }
        }
    }
    let (front, pose) = best?;
    if front * 10 < pairs.len() * 9 {
        return None;
    }
    let corners = board.corners();
    let cp = corners.iter().sum::<Vector3<f64>>() / corners.len() as f64;
    let true_spread: f64 = corners.iter().map(|p| (p - cp).norm()).sum();
    let (mut num, mut den) = (0.0, 0.0);
    for (l, r) in rays {
        let tri = l
            .iter()
            .zip(r)
            .map(|(a, b)| triangulate_normalized(&pose, a, b))
            .collect::<Result<Vec<_>>>()
            .ok()?;
        let c = tri.iter().sum::<Vector3<f64>>() / tri.len() as f64;
        num += true_spread;
        den += tri.iter().map(|p| (p - c).norm()).sum::<f64>();
    }
    (den > 0.0).then(|| Pose::new(pose.rvec, pose.tvec * (num / den)))
}

/// Monocular initialization: per-view PnP and the averaged relative pose.
pub fn initialize_monocular(dataset: &CalibrationDataset) -> Result<CalibrationResult> {
    dataset.validate()?;
    let mono = monocular_poses(dataset)?;
    let relative = relative_from_monocular(&mono)?;
    let mut init = CalibrationResult::new(relative, mono.iter().map(|(l, _)| *l).collect());
    init.rms_reproj = reprojection_error_stats(dataset, &init)?.rms;
    Ok(init)
}

/// Scores a relative-pose hypothesis: left poses from stereo triangulation,
/// then the stereo reprojection RMS. `None` if any view cannot be fitted.
fn score_relative(
    dataset: &CalibrationDataset,
    rays: &[ViewRays],
    relative: Pose,
) -> Option<CalibrationResult> {
    let poses = rays
        .iter()
        .map(|r| stereo_board_pose_from_rays(&relative, &dataset.board, r))
        .collect::<Result<Vec<_>>>()
        .ok()?;
    let mut r = CalibrationResult::new(relative, poses);
    r.rms_reproj = reprojection_error_stats(dataset, &r).ok()?.rms;
    r.rms_reproj.is_finite().then_some(r)
}

/// Initial estimates. Monocular PnP on small or distant boards is often
/// trapped in the planar flip ambiguity, so every per-view relative pose and
/// their average are tried as hypotheses; each is scored with left poses
/// re-fitted to triangulated corners, and the best `keep` are returned in
/// order of stereo reprojection RMS.
pub fn initial_hypotheses(
    dataset: &CalibrationDataset,
    keep: usize,
) -> Result<Vec<CalibrationResult>> {
    dataset.validate()?;
    let mono = monocular_poses(dataset)?;
    let rays = dataset
        .views
        .iter()
        .map(|v| view_rays(dataset, v))
        .collect::<Result<Vec<_>>>()?;
    hypotheses_from(dataset, &mono, &rays, keep)
}

/// [`initial_hypotheses`] from precomputed per-view monocular poses and rays.
pub fn hypotheses_from(
    dataset: &CalibrationDataset,
    mono: &[(Pose, Pose)],
    rays: &[ViewRays],
    keep: usize,
) -> Result<Vec<CalibrationResult>> {
    let mut candidates = vec![relative_from_monocular(mono)?];
    candidates.extend(mono.iter().map(|(l, r)| init_relative(l, r)));
    candidates.extend(relative_from_essential(&dataset.board, rays));
    let mut scored: Vec<CalibrationResult> = candidates
        .into_iter()
        .filter_map(|c| score_relative(dataset, rays, c))
        .collect();
    if scored.is_empty() {
        let mut init = CalibrationResult::new(
            relative_from_monocular(mono)?,
            mono.iter().map(|(l, _)| *l).collect(),
        );
        init.rms_reproj = reprojection_error_stats(dataset, &init)?.rms;
        return Ok(vec![init]);
    }
    scored.sort_by(|a, b| a.rms_reproj.total_cmp(&b.rms_reproj));
    scored.truncate(keep.max(1));
    Ok(scored)
}

/// Best single initial estimate, see [`initial_hypotheses`].
pub fn initialize(dataset: &CalibrationDataset) -> Result<CalibrationResult> {
    Ok(initial_hypotheses(dataset, 1)?.remove(0))
}

/// Hypotheses refined by bundle adjustment in [`calibrate`].
pub const INIT_HYPOTHESES: usize = 3;
/// Screening budget for re-calibration when a warm start is available.
pub const SCREENING_ITERATIONS: usize = 15;

/// Refines several initial estimates: each gets `screening` bundle-adjustment
/// iterations, then the lowest-cost one is refined to convergence.
pub fn refine_best(
    dataset: &CalibrationDataset,
    inits: impl IntoIterator<Item = CalibrationResult>,
    kernel: RobustKernel,
    screening: usize,
) -> Result<CalibrationResult> {
    let mut best: Option<(f64, CalibrationResult)> = None;
    let mut last_err = None;
    for init in inits {
        match bundle::bundle_adjust_with(dataset, &init, kernel, screening) {
            Ok(r) => {
                let cost = robust_cost(dataset, &r, kernel);
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, r));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (_, screened) = best.ok_or_else(|| last_err.unwrap_or(Error::DegenerateConfiguration))?;
    if screened.iterations < screening {
        return Ok(screened);
    }
    let mut r = bundle_adjust(dataset, &screened, kernel)?;
    r.iterations += screened.iterations;
    Ok(r)
}

/// Full pipeline: PnP, relative initialization, bundle adjustment. The best
/// few initial hypotheses are each refined to convergence and the
/// lowest-cost result is kept.
pub fn calibrate(dataset: &CalibrationDataset, kernel: RobustKernel) -> Result<CalibrationResult> {
    if dataset.views.len() < 2 {
        return Err(Error::InsufficientViews {
            needed: 2,
            got: dataset.views.len(),
        });
    }
    refine_best(
        dataset,
        initial_hypotheses(dataset, INIT_HYPOTHESES)?,
        kernel,
        MAX_ITERATIONS,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_poses_give_identity() {
        let p = Pose::new(Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, 2.0, 3.0));
        let rel = init_relative(&p, &p);
        assert!(rel.rvec.norm() < 1e-12);
        assert!(rel.tvec.norm() < 1e-12);
    }

    #[test]
    fn symmetric_rotations_average_to_identity() {
        let theta = 0.2;
        let a = Pose::new(Vector3::new(0.0, theta, 0.0), Vector3::new(1.0, 0.0, 0.0));
        let b = Pose::new(Vector3::new(0.0, -theta, 0.0), Vector3::new(3.0, 0.0, 0.0));
        let id = Pose::identity();
        let mean = relative_from_monocular(&[(id, a), (id, b)]).unwrap();
        assert!(mean.rvec.norm() < 1e-12);
        assert!((mean.tvec - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn identical_views_average_to_themselves() {
        let l = Pose::new(Vector3::new(0.3, 0.0, 0.1), Vector3::new(0.0, 0.0, 800.0));
        let r = Pose::new(
            Vector3::new(0.1, -0.3, 0.0),
            Vector3::new(400.0, 0.0, 900.0),
        );
        let expect = init_relative(&l, &r);
        let mean = relative_from_monocular(&[(l, r), (l, r), (l, r)]).unwrap();
        assert!((mean.rvec - expect.rvec).norm() < 1e-12);
        assert!((mean.tvec - expect.tvec).norm() < 1e-9);
    }

    #[test]
    fn empty_monocular_rejected() {
        assert!(relative_from_monocular(&[]).is_err());
    }
}
