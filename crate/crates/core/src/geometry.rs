//! Camera models, rigid transforms, projection and triangulation.
//!
//! Conventions used throughout the crate:
//!
//! * lengths are millimetres, angles radians (degrees only in reported metrics);
//! * a [`Pose`] maps world (board) coordinates into a camera frame,
//!   `Q = R·P + t`, with `R` stored as an axis-angle vector;
//! * the relative pose of a [`StereoRig`] maps the left camera frame into the
//!   right camera frame, so the right absolute pose is `(R·Rˡ, R·tˡ + t)`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_util;

/// Fixed-point iterations used when inverting the distortion polynomial.
const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_TOL: f64 = 1e-12;

/// Minimum angle between two viewing rays before triangulation is refused.
const MIN_RAY_ANGLE: f64 = 1e-6;

/// Pinhole camera with four-coefficient radial/tangential distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fu: f64,
    pub fv: f64,
    pub u0: f64,
    pub v0: f64,
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    /// Distortion-free camera.
    pub fn pinhole(fu: f64, fv: f64, u0: f64, v0: f64, width: u32, height: u32) -> Self {
        Self {
            fu,
            fv,
            u0,
            v0,
            k1: 0.0,
            k2: 0.0,
            p1: 0.0,
            p2: 0.0,
            width,
            height,
        }
    }

    pub fn with_distortion(mut self, d: [f64; 4]) -> Self {
        [self.k1, self.k2, self.p1, self.p2] = d;
        self
    }

    pub fn distortion(&self) -> [f64; 4] {
        [self.k1, self.k2, self.p1, self.p2]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.fu, self.fv, self.u0, self.v0, self.k1, self.k2, self.p1, self.p2,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        if self.fu <= 0.0 || self.fv <= 0.0 {
            return Err(Error::InvalidModel("focal lengths must be positive".into()));
        }
        if !(self.u0 > 0.0 && self.u0 < self.width as f64) {
            return Err(Error::InvalidModel("u0 must lie inside the image".into()));
        }
        if !(self.v0 > 0.0 && self.v0 < self.height as f64) {
            return Err(Error::InvalidModel("v0 must lie inside the image".into()));
        }
        Ok(())
    }

    /// Applies lens distortion to a normalized image coordinate.
    pub fn distort(&self, x: &Vector2<f64>) -> Vector2<f64> {
        let (px, py) = (x.x, x.y);
        let r2 = px * px + py * py;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        Vector2::new(
            px * radial + 2.0 * self.p1 * px * py + self.p2 * (r2 + 2.0 * px * px),
            py * radial + self.p1 * (r2 + 2.0 * py * py) + 2.0 * self.p2 * px * py,
        )
    }

    /// Jacobian of [`Self::distort`] with respect to the undistorted coordinate.
    pub fn distortion_jacobian(&self, x: &Vector2<f64>) -> Matrix2<f64> {
        let (px, py) = (x.x, x.y);
        let r2 = px * px + py * py;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        let slope = self.k1 + 2.0 * self.k2 * r2;
        let cross = 2.0 * px * py * slope + 2.0 * self.p1 * px + 2.0 * self.p2 * py;
        Matrix2::new(
            radial + 2.0 * px * px * slope + 2.0 * self.p1 * py + 6.0 * self.p2 * px,
            cross,
            cross,
            radial + 2.0 * py * py * slope + 6.0 * self.p1 * py + 2.0 * self.p2 * px,
        )
    }

    /// Inverts the distortion polynomial by fixed-point iteration.
    pub fn undistort(&self, xd: &Vector2<f64>) -> Result<Vector2<f64>> {
        let mut x = *xd;
        for _ in 0..UNDISTORT_MAX_ITERS {
            let (px, py) = (x.x, x.y);
            let r2 = px * px + py * py;
            let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
            let tx = 2.0 * self.p1 * px * py + self.p2 * (r2 + 2.0 * px * px);
            let ty = self.p1 * (r2 + 2.0 * py * py) + 2.0 * self.p2 * px * py;
            let next = Vector2::new((xd.x - tx) / radial, (xd.y - ty) / radial);
            if !next.x.is_finite() || !next.y.is_finite() {
                return Err(Error::UndistortionFailed);
            }
            let delta = (next - x).norm();
            x = next;
            if delta < UNDISTORT_TOL {
                break;
            }
        }
        if (self.distort(&x) - xd).norm() > 1e-8 {
            return Err(Error::UndistortionFailed);
        }
        Ok(x)
    }

    pub fn to_pixel(&self, xd: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fu * xd.x + self.u0, self.fv * xd.y + self.v0)
    }

    pub fn from_pixel(&self, pixel: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((pixel.x - self.u0) / self.fu, (pixel.y - self.v0) / self.fv)
    }

    /// Pixel to undistorted normalized coordinate.
    pub fn unproject(&self, pixel: &Vector2<f64>) -> Result<Vector2<f64>> {
        self.undistort(&self.from_pixel(pixel))
    }

    /// Projects a point given in this camera's frame.
    pub fn project_camera_point(&self, q: &Vector3<f64>) -> Result<Vector2<f64>> {
        if q.z <= 0.0 || !q.z.is_finite() {
            return Err(Error::BehindCamera { depth: q.z });
        }
        let x = Vector2::new(q.x / q.z, q.y / q.z);
        Ok(self.to_pixel(&self.distort(&x)))
    }

    /// Projects a camera-frame point and returns `∂pixel/∂Q` alongside.
    pub fn project_with_jacobian(
        &self,
        q: &Vector3<f64>,
    ) -> Result<(Vector2<f64>, Matrix2x3<f64>)> {
        if q.z <= 0.0 || !q.z.is_finite() {
            return Err(Error::BehindCamera { depth: q.z });
        }
        let iz = 1.0 / q.z;
        let x = Vector2::new(q.x * iz, q.y * iz);
        let pixel = self.to_pixel(&self.distort(&x));
        let d_norm = Matrix2x3::new(iz, 0.0, -q.x * iz * iz, 0.0, iz, -q.y * iz * iz);
        let d_pix = Matrix2::new(self.fu, 0.0, 0.0, self.fv);
        Ok((pixel, d_pix * self.distortion_jacobian(&x) * d_norm))
    }

    /// True if the pixel lies inside the image shrunk by `margin` on every side.
    pub fn in_image(&self, pixel: &Vector2<f64>, margin: f64) -> bool {
        pixel.x >= margin
            && pixel.y >= margin
            && pixel.x <= self.width as f64 - margin
            && pixel.y <= self.height as f64 - margin
    }
}

/// Rigid transform from a world frame into a camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(with = "serde_util::vec3")]
    pub rvec: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub tvec: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rvec: Vector3<f64>, tvec: Vector3<f64>) -> Self {
        Self { rvec, tvec }
    }

    pub fn identity() -> Self {
        Self {
            rvec: Vector3::zeros(),
            tvec: Vector3::zeros(),
        }
    }

    /// Builds a pose from a rotation matrix, re-canonicalizing the axis-angle.
    pub fn from_matrix(rotation: &Matrix3<f64>, tvec: Vector3<f64>) -> Self {
        Self {
            rvec: axis_angle_from_rotation(rotation),
            tvec,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_axis_angle(&self.rvec)
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.tvec
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let r = self.rotation();
        Pose::from_matrix(&(r * other.rotation()), r * other.tvec + self.tvec)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation().transpose();
        Pose::from_matrix(&rt, -(rt * self.tvec))
    }

    /// Applies a tangent-space increment `[δφ, δt]`.
    ///
    /// The update is `R ← exp(δφ)·R`, `t ← exp(δφ)·t + δt`, so a transformed
    /// point moves as `Q ← exp(δφ)·Q + δt`, giving `∂Q/∂δφ = −[Q]×` and
    /// `∂Q/∂δt = I` at `δ = 0`. All analytic Jacobians in the crate are taken
    /// with respect to this increment.
    pub fn retract(&self, delta: &Vector6<f64>) -> Pose {
        let dr = rotation_from_axis_angle(&delta.fixed_rows::<3>(0).into_owned());
        let r = dr * self.rotation();
        Pose::from_matrix(&r, dr * self.tvec + delta.fixed_rows::<3>(3))
    }

    /// Camera centre expressed in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.tvec)
    }
}

/// Rodrigues map from an axis-angle vector to a rotation matrix.
pub fn rotation_from_axis_angle(rvec: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*rvec).into_inner()
}

/// Inverse Rodrigues map; the result has norm in `[0, π]`.
pub fn axis_angle_from_rotation(rotation: &Matrix3<f64>) -> Vector3<f64> {
    let rot = Rotation3::from_matrix_unchecked(*rotation);
    UnitQuaternion::from_rotation_matrix(&rot).scaled_axis()
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Two cameras with known intrinsics and the left-to-right transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub left: CameraModel,
    pub right: CameraModel,
    pub relative: Pose,
}

impl StereoRig {
    pub fn validate(&self) -> Result<()> {
        self.left.validate()?;
        self.right.validate()
    }

    pub fn with_relative(&self, relative: Pose) -> Self {
        Self { relative, ..*self }
    }

    /// Right camera centre in the left camera frame.
    pub fn right_center(&self) -> Vector3<f64> {
        self.relative.center()
    }

    /// Right optical axis expressed in the left camera frame.
    pub fn right_axis(&self) -> Vector3<f64> {
        self.relative.rotation().transpose() * Vector3::z()
    }
}

/// Planar chessboard target. Corners lie on the `Z = 0` world plane.
///
/// `rows` counts corners along the world X axis, `cols` along Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "spacing_mm")]
    pub spacing: f64,
}

impl BoardSpec {
    pub fn new(rows: usize, cols: usize, spacing: f64) -> Self {
        Self {
            rows,
            cols,
            spacing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::InvalidConfig(
                "board needs at least 2x2 corners".into(),
            ));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidConfig(
                "board spacing must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn corner_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Geometric centre of the corner grid.
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(
            (self.rows - 1) as f64 * self.spacing * 0.5,
            (self.cols - 1) as f64 * self.spacing * 0.5,
            0.0,
        )
    }

    pub fn corners(&self) -> Vec<Vector3<f64>> {
        board_corners(self)
    }
}

/// Chessboard corners, X varying fastest, at `(i·s, j·s, 0)`.
pub fn board_corners(spec: &BoardSpec) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(spec.corner_count());
    for j in 0..spec.cols {
        for i in 0..spec.rows {
            out.push(Vector3::new(
                i as f64 * spec.spacing,
                j as f64 * spec.spacing,
                0.0,
            ));
        }
    }
    out
}

/// Right-camera absolute pose implied by the relative pose: `(R·Rˡ, R·tˡ + t)`.
pub fn compose_right_extrinsics(relative: &Pose, left_abs: &Pose) -> Pose {
    relative.compose(left_abs)
}

pub fn project(model: &CameraModel, pose: &Pose, point: &Vector3<f64>) -> Result<Vector2<f64>> {
    model.project_camera_point(&pose.transform(point))
}

/// Midpoint triangulation of one stereo correspondence.
///
/// Returns the point in the world frame defined by `left_abs`.
pub fn triangulate(
    rig: &StereoRig,
    left_abs: &Pose,
    pix_l: &Vector2<f64>,
    pix_r: &Vector2<f64>,
) -> Result<Vector3<f64>> {
    let xl = rig.left.unproject(pix_l)?;
    let xr = rig.right.unproject(pix_r)?;
    let q = triangulate_normalized(&rig.relative, &xl, &xr)?;
    let rl = left_abs.rotation();
    Ok(rl.transpose() * (q - left_abs.tvec))
}

/// Midpoint triangulation from undistorted normalized coordinates; the
/// result is in the left camera frame.
pub fn triangulate_normalized(
    relative: &Pose,
    xl: &Vector2<f64>,
    xr: &Vector2<f64>,
) -> Result<Vector3<f64>> {
    let dl = Vector3::new(xl.x, xl.y, 1.0).normalize();
    let r_t = relative.rotation().transpose();
    let dr = (r_t * Vector3::new(xr.x, xr.y, 1.0)).normalize();
    let cr = relative.center();

    let baseline = cr.norm();
    let angle = dl.cross(&dr).norm().atan2(dl.dot(&dr));
    if baseline < 1e-12 || angle < MIN_RAY_ANGLE {
        return Err(Error::DegenerateRays { angle, baseline });
    }

    // Closest points on the rays s·dl and cr + u·dr.
    let b = dl.dot(&dr);
    let d = dl.dot(&cr);
    let e = dr.dot(&cr);
    let denom = 1.0 - b * b;
    let s = (d - b * e) / denom;
    let u = (b * d - e) / denom;
    Ok(0.5 * (dl * s + cr + dr * u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn camera() -> CameraModel {
        CameraModel::pinhole(800.0, 800.0, 320.0, 240.0, 640, 480)
    }

    pub(crate) fn sample_rig() -> StereoRig {
        let cam = camera().with_distortion([0.01, 0.1, 0.0, 0.0]);
        StereoRig {
            left: cam,
            right: cam,
            relative: Pose::new(
                Vector3::new(-0.003, -0.303, -0.017),
                Vector3::new(440.3, -6.2, 25.1),
            ),
        }
    }

    #[test]
    fn zero_rotation_is_identity() {
        assert_eq!(
            rotation_from_axis_angle(&Vector3::zeros()),
            Matrix3::identity()
        );
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rotation_from_axis_angle(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let v = r * Vector3::x();
        assert!((v - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn right_extrinsics_with_identity() {
        let left = Pose::new(Vector3::new(0.1, -0.2, 0.3), Vector3::new(1.0, 2.0, 300.0));
        let right = compose_right_extrinsics(&Pose::identity(), &left);
        assert!((right.rvec - left.rvec).norm() < 1e-14);
        assert!((right.tvec - left.tvec).norm() < 1e-12);

        let rel = sample_rig().relative;
        let right = compose_right_extrinsics(&rel, &Pose::identity());
        assert!((right.rvec - rel.rvec).norm() < 1e-14);
        assert!((right.tvec - rel.tvec).norm() < 1e-12);
    }

    #[test]
    fn principal_point_projection() {
        let p = project(
            &camera(),
            &Pose::identity(),
            &Vector3::new(0.0, 0.0, 1000.0),
        )
        .unwrap();
        assert_eq!(p, Vector2::new(320.0, 240.0));
    }

    #[test]
    fn distorted_projection_scalar() {
        // x = 0.1, r² = 0.01: u = 800·0.1·(1 + 0.01·0.01 + 0.1·0.0001) + 320
        let cam = camera().with_distortion([0.01, 0.1, 0.0, 0.0]);
        let p = project(&cam, &Pose::identity(), &Vector3::new(100.0, 0.0, 1000.0)).unwrap();
        assert!((p.x - 400.0088).abs() < 1e-9, "{}", p.x);
        assert!((p.y - 240.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera() {
        let err = project(&camera(), &Pose::identity(), &Vector3::new(0.0, 0.0, -5.0)).unwrap_err();
        assert_eq!(err, Error::BehindCamera { depth: -5.0 });
    }

    #[test]
    fn zero_distortion_is_identity() {
        let cam = camera();
        let x = Vector2::new(0.3, -0.2);
        assert_eq!(cam.distort(&x), x);
        assert_eq!(
            cam.distortion_jacobian(&Vector2::zeros()),
            Matrix2::identity()
        );
    }

    #[test]
    fn distortion_jacobian_matches_finite_differences() {
        let cam = camera().with_distortion([-0.2, 0.08, 0.003, -0.002]);
        let x = Vector2::new(0.21, -0.13);
        let jac = cam.distortion_jacobian(&x);
        let h = 1e-7;
        for k in 0..2 {
            let mut dp = x;
            let mut dm = x;
            dp[k] += h;
            dm[k] -= h;
            let col = (cam.distort(&dp) - cam.distort(&dm)) / (2.0 * h);
            for r in 0..2 {
                assert!((jac[(r, k)] - col[r]).abs() < 1e-8, "({r},{k})");
            }
        }
    }

    #[test]
    fn undistort_round_trip() {
        let cam = camera().with_distortion([0.01, 0.1, 0.001, -0.001]);
        let x = Vector2::new(0.35, -0.28);
        let back = cam.undistort(&cam.distort(&x)).unwrap();
        assert!((back - x).norm() < 1e-12);
    }

    #[test]
    fn board_corner_layout() {
        let c = board_corners(&BoardSpec::new(9, 6, 5.0));
        assert_eq!(c.len(), 54);
        assert_eq!(c.iter().map(|p| p.x).fold(0.0, f64::max), 40.0);
        assert_eq!(c.iter().map(|p| p.y).fold(0.0, f64::max), 25.0);
        assert!(c.iter().all(|p| p.z == 0.0));

        let small = board_corners(&BoardSpec::new(2, 2, 1.0));
        let expect = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        for (p, e) in small.iter().zip(expect) {
            assert_eq!([p.x, p.y, p.z], [e[0], e[1], 0.0]);
        }
    }

    #[test]
    fn triangulation_round_trip() {
        let rig = sample_rig();
        let board = BoardSpec::new(9, 6, 5.0);
        let left = Pose::new(
            Vector3::new(0.1, 0.2, -0.1),
            Vector3::new(-60.0, 10.0, 900.0),
        );
        let right = compose_right_extrinsics(&rig.relative, &left);
        for p in board.corners() {
            let pl = project(&rig.left, &left, &p).unwrap();
            let pr = project(&rig.right, &right, &p).unwrap();
            let x = triangulate(&rig, &left, &pl, &pr).unwrap();
            assert!((x - p).norm() < 1e-9, "{}", (x - p).norm());
        }
    }

    #[test]
    fn zero_baseline_is_degenerate() {
        let mut rig = sample_rig();
        rig.relative.tvec = Vector3::zeros();
        let left = Pose::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1000.0));
        let right = compose_right_extrinsics(&rig.relative, &left);
        let p = Vector3::new(10.0, 10.0, 0.0);
        let pl = project(&rig.left, &left, &p).unwrap();
        let pr = project(&rig.right, &right, &p).unwrap();
        assert!(matches!(
            triangulate(&rig, &left, &pl, &pr),
            Err(Error::DegenerateRays { .. })
        ));
    }

    #[test]
    fn camera_validation() {
        assert!(camera().validate().is_ok());
        let mut bad = camera();
        bad.fu = 0.0;
        assert!(matches!(bad.validate(), Err(Error::InvalidModel(_))));
        let mut bad = camera();
        bad.u0 = 700.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn json_schema_keys() {
        let v = serde_json::to_value(camera()).unwrap();
        for key in [
            "fu", "fv", "u0", "v0", "k1", "k2", "p1", "p2", "width", "height",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let v = serde_json::to_value(Pose::identity()).unwrap();
        assert_eq!(v["rvec"], serde_json::json!([0.0, 0.0, 0.0]));
        assert_eq!(v["tvec"].as_array().unwrap().len(), 3);
        let v = serde_json::to_value(BoardSpec::new(9, 6, 5.0)).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"rows": 9, "cols": 6, "spacing_mm": 5.0})
        );
    }
}
