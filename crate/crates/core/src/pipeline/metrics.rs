//! Accuracy metrics: rotation/translation error against a reference and
//! reprojection/triangulation error on a dataset.

use serde::{Deserialize, Serialize};

use super::{CalibrationDataset, CalibrationResult};
use crate::error::{Error, Result};
use crate::geometry::{triangulate, Pose};
use nalgebra::Vector3;

/// Geodesic angle between two rotations in degrees:
/// `arccos((tr(R_ref·R_calᵀ) − 1) / 2)·180/π`.
///
/// Evaluated as `atan2(sin θ, cos θ)` with `sin θ` from the skew part of the
/// relative rotation, which keeps full precision near 0° and 180°.
pub fn rotation_error(reference: &Pose, calibrated: &Pose) -> f64 {
    let m = reference.rotation() * calibrated.rotation().transpose();
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin = 0.5
        * Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm();
    sin.atan2(cos).to_degrees()
}

/// Symmetric relative translation error in percent:
/// `2·‖t_ref − t_cal‖ / (‖t_ref‖ + ‖t_cal‖)·100`.
pub fn translation_error(reference: &Vector3<f64>, calibrated: &Vector3<f64>) -> Result<f64> {
    let denom = reference.norm() + calibrated.norm();
    if denom == 0.0 {
        return Err(Error::UndefinedError);
    }
    Ok(2.0 * (reference - calibrated).norm() / denom * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionStats {
    pub rms: f64,
    pub mean: f64,
}

/// RMS and mean per-corner reprojection distance over both cameras.
pub fn reprojection_error_stats(
    dataset: &CalibrationDataset,
    result: &CalibrationResult,
) -> Result<ReprojectionStats> {
    if result.per_view_left_abs.len() != dataset.views.len() {
        return Err(Error::DimensionMismatch(
            "result poses do not match view count".into(),
        ));
    }
    let rig = dataset.rig(result.relative);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for (view, pose) in dataset.views.iter().zip(&result.per_view_left_abs) {
        let right = result.relative.compose(pose);
        for (j, p) in view.board.corners().iter().enumerate() {
            let pl = rig.left.project_camera_point(&pose.transform(p))?;
            let pr = rig.right.project_camera_point(&right.transform(p))?;
            for d in [
                (view.left_pixels[j] - pl).norm(),
                (view.right_pixels[j] - pr).norm(),
            ] {
                sum += d;
                sum_sq += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(ReprojectionStats {
            rms: 0.0,
            mean: 0.0,
        });
    }
    Ok(ReprojectionStats {
        rms: (sum_sq / count as f64).sqrt(),
        mean: sum / count as f64,
    })
}

/// Mean distance (mm) between triangulated corners, mapped into the board
/// frame by each view's left pose, and the true board corners.
pub fn triangulation_error_stats(
    dataset: &CalibrationDataset,
    result: &CalibrationResult,
) -> Result<f64> {
    if result.per_view_left_abs.len() != dataset.views.len() {
        return Err(Error::DimensionMismatch(
            "result poses do not match view count".into(),
        ));
    }
    let rig = dataset.rig(result.relative);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (view, pose) in dataset.views.iter().zip(&result.per_view_left_abs) {
        for (j, p) in view.board.corners().iter().enumerate() {
            let x = triangulate(&rig, pose, &view.left_pixels[j], &view.right_pixels[j])?;
            sum += (x - p).norm();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}
