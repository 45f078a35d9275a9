//! Stereo reprojection residuals, their analytic Jacobian blocks and the
//! block-sparse information matrix.
//!
//! Per view `i` with `n` corners:
//!
//! * `U_i` (2n×6): right-camera residuals w.r.t. the relative pose `(R, t)`;
//! * `V_i` (2n×6): left-camera residuals w.r.t. the left absolute pose.
//!
//! The information matrix `JᵀJ = [[A, C], [Cᵀ, B]]` is kept in block form:
//! `A = Σ UᵢᵀUᵢ`, `B = diag(VᵢᵀVᵢ)`, `C = (UᵢᵀVᵢ)`. The dense `J` is never
//! built.
//!
//! Derivatives are taken w.r.t. the tangent increment of [`Pose::retract`],
//! for which `∂Q/∂δφ = −[Q]×` and `∂Q/∂δt = I`.

use nalgebra::{DMatrix, DVector, Matrix2x6, Matrix3, Matrix3x6, Matrix6, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compose_right_extrinsics, skew, BoardSpec, Pose, StereoRig};
use crate::serde_util;

/// One synchronized pair of corner observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPair {
    #[serde(with = "serde_util::vec2_list")]
    pub left_pixels: Vec<Vector2<f64>>,
    #[serde(with = "serde_util::vec2_list")]
    pub right_pixels: Vec<Vector2<f64>>,
    pub board: BoardSpec,
    /// Board-to-left-camera pose this view is linearized at. Optional in
    /// input files: calibration estimates it and ignores the stored value.
    #[serde(default = "Pose::identity")]
    pub left_abs: Pose,
}

impl ViewPair {
    /// Noise-free observations of `board` at `left_abs`.
    pub fn exact(rig: &StereoRig, board: &BoardSpec, left_abs: &Pose) -> Result<Self> {
        let right_abs = compose_right_extrinsics(&rig.relative, left_abs);
        let corners = board.corners();
        let left_pixels = corners
            .iter()
            .map(|p| rig.left.project_camera_point(&left_abs.transform(p)))
            .collect::<Result<Vec<_>>>()?;
        let right_pixels = corners
            .iter()
            .map(|p| rig.right.project_camera_point(&right_abs.transform(p)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            left_pixels,
            right_pixels,
            board: *board,
            left_abs: *left_abs,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.board.corner_count();
        if self.left_pixels.len() != n || self.right_pixels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "view has {}/{} pixels for a {}-corner board",
                self.left_pixels.len(),
                self.right_pixels.len(),
                n
            )));
        }
        Ok(())
    }

    pub fn with_left_abs(&self, left_abs: Pose) -> Self {
        Self {
            left_abs,
            ..self.clone()
        }
    }
}

/// Per-corner residuals `observed − projected` for both cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    pub left: Vec<Vector2<f64>>,
    pub right: Vec<Vector2<f64>>,
}

impl ResidualVector {
    /// Left residuals followed by right residuals: `4n` entries.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            4 * self.left.len(),
            self.left.iter().chain(&self.right).flat_map(|r| [r.x, r.y]),
        )
    }

    pub fn len(&self) -> usize {
        2 * (self.left.len() + self.right.len())
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

/// Which rows of the stereo Jacobian feed the absolute-pose blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// `Vᵢ` holds only left-camera residual derivatives and shares rows with
    /// `Uᵢ`, exactly as in the block layout above.
    #[default]
    Printed,
    /// Each view contributes `4n` rows; `Vᵢ` also carries the right-camera
    /// residuals' dependence on the left pose through `Qʳ = R·Qˡ + t`.
    FullChain,
}

/// Config form of [`JacobianMode`]: `{"full_chain": bool}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct JacobianSettings {
    pub full_chain: bool,
}

impl JacobianSettings {
    pub fn mode(&self) -> JacobianMode {
        JacobianMode::from_full_chain(self.full_chain)
    }
}

impl From<JacobianMode> for JacobianSettings {
    fn from(mode: JacobianMode) -> Self {
        Self {
            full_chain: mode == JacobianMode::FullChain,
        }
    }
}

impl JacobianMode {
    pub fn from_full_chain(full_chain: bool) -> Self {
        if full_chain {
            JacobianMode::FullChain
        } else {
            JacobianMode::Printed
        }
    }
}

/// All derivative blocks of one board corner.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CornerJacobian {
    pub left_pixel: Vector2<f64>,
    pub right_pixel: Vector2<f64>,
    /// Left residual w.r.t. left pose.
    pub v_left: Matrix2x6<f64>,
    /// Right residual w.r.t. relative pose.
    pub u_right: Matrix2x6<f64>,
    /// Right residual w.r.t. left pose.
    pub v_right: Matrix2x6<f64>,
}

fn point_jacobian(q: &Vector3<f64>) -> Matrix3x6<f64> {
    let mut m = Matrix3x6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(q)));
    m.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&Matrix3::identity());
    m
}

pub(crate) fn corner_jacobian(
    rig: &StereoRig,
    left_abs: &Pose,
    rl: &Matrix3<f64>,
    r_rel: &Matrix3<f64>,
    point: &Vector3<f64>,
) -> Result<CornerJacobian> {
    let ql = rl * point + left_abs.tvec;
    let qr = r_rel * ql + rig.relative.tvec;
    let (left_pixel, jl) = rig.left.project_with_jacobian(&ql)?;
    let (right_pixel, jr) = rig.right.project_with_jacobian(&qr)?;
    let dql = point_jacobian(&ql);
    Ok(CornerJacobian {
        left_pixel,
        right_pixel,
        v_left: -(jl * dql),
        u_right: -(jr * point_jacobian(&qr)),
        v_right: -(jr * r_rel * dql),
    })
}

pub(crate) fn view_corner_jacobians(
    rig: &StereoRig,
    board: &BoardSpec,
    left_abs: &Pose,
) -> Result<Vec<CornerJacobian>> {
    let rl = left_abs.rotation();
    let r_rel = rig.relative.rotation();
    board
        .corners()
        .iter()
        .map(|p| corner_jacobian(rig, left_abs, &rl, &r_rel, p))
        .collect()
}

/// Reprojection residuals of one view; right projections use `(R·Rˡ, R·tˡ + t)`.
pub fn residuals(view: &ViewPair, rig: &StereoRig) -> Result<ResidualVector> {
    view.validate()?;
    let right_abs = compose_right_extrinsics(&rig.relative, &view.left_abs);
    let corners = view.board.corners();
    let mut left = Vec::with_capacity(corners.len());
    let mut right = Vec::with_capacity(corners.len());
    for (j, p) in corners.iter().enumerate() {
        let pl = rig.left.project_camera_point(&view.left_abs.transform(p))?;
        let pr = rig.right.project_camera_point(&right_abs.transform(p))?;
        left.push(view.left_pixels[j] - pl);
        right.push(view.right_pixels[j] - pr);
    }
    Ok(ResidualVector { left, right })
}

fn stack_rows(blocks: impl ExactSizeIterator<Item = Matrix2x6<f64>>) -> DMatrix<f64> {
    let n = blocks.len();
    let mut m = DMatrix::zeros(2 * n, 6);
    for (j, b) in blocks.enumerate() {
        m.fixed_view_mut::<2, 6>(2 * j, 0).copy_from(&b);
    }
    m
}

/// `Vᵢ`: left residuals w.r.t. the left absolute pose, `2n×6`.
pub fn block_v(view: &ViewPair, rig: &StereoRig) -> Result<DMatrix<f64>> {
    let jac = view_corner_jacobians(rig, &view.board, &view.left_abs)?;
    Ok(stack_rows(jac.iter().map(|c| c.v_left)))
}

/// `Uᵢ`: right residuals w.r.t. the relative pose, `2n×6`.
pub fn block_u(view: &ViewPair, rig: &StereoRig) -> Result<DMatrix<f64>> {
    let jac = view_corner_jacobians(rig, &view.board, &view.left_abs)?;
    Ok(stack_rows(jac.iter().map(|c| c.u_right)))
}

/// Right residuals w.r.t. the left absolute pose, `2n×6` (full-chain rows).
pub fn block_v_right(view: &ViewPair, rig: &StereoRig) -> Result<DMatrix<f64>> {
    let jac = view_corner_jacobians(rig, &view.board, &view.left_abs)?;
    Ok(stack_rows(jac.iter().map(|c| c.v_right)))
}

/// Contribution of a single view to the information blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewInfo {
    pub a: Matrix6<f64>,
    pub b: Matrix6<f64>,
    pub c: Matrix6<f64>,
}

impl ViewInfo {
    /// Information this view adds about the relative pose once its own
    /// absolute pose is marginalized: `UᵢᵀUᵢ − Cᵢ Bᵢ⁻¹ Cᵢᵀ`.
    pub fn reduced(&self) -> Result<Matrix6<f64>> {
        let chol = self.b.cholesky().ok_or(Error::SingularInformation {
            condition: f64::INFINITY,
        })?;
        Ok(self.a - self.c * chol.solve(&self.c.transpose()))
    }
}

/// Information contribution of a board at `left_abs`; independent of the
/// observed pixels.
pub fn view_info(
    rig: &StereoRig,
    board: &BoardSpec,
    left_abs: &Pose,
    mode: JacobianMode,
) -> Result<ViewInfo> {
    let jac = view_corner_jacobians(rig, board, left_abs)?;
    let mut info = ViewInfo {
        a: Matrix6::zeros(),
        b: Matrix6::zeros(),
        c: Matrix6::zeros(),
    };
    for cj in &jac {
        let ut = cj.u_right.transpose();
        info.a += ut * cj.u_right;
        match mode {
            JacobianMode::Printed => {
                info.b += cj.v_left.transpose() * cj.v_left;
                info.c += ut * cj.v_left;
            }
            JacobianMode::FullChain => {
                info.b += cj.v_left.transpose() * cj.v_left + cj.v_right.transpose() * cj.v_right;
                info.c += ut * cj.v_right;
            }
        }
    }
    Ok(info)
}

/// Block form of `JᵀJ` for a set of views.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoBlocks {
    pub a: Matrix6<f64>,
    pub b_blocks: Vec<Matrix6<f64>>,
    pub c_blocks: Vec<Matrix6<f64>>,
}

impl InfoBlocks {
    pub fn from_views(infos: impl IntoIterator<Item = ViewInfo>) -> Self {
        let mut out = InfoBlocks {
            a: Matrix6::zeros(),
            b_blocks: Vec::new(),
            c_blocks: Vec::new(),
        };
        for v in infos {
            out.push(v);
        }
        out
    }

    pub fn push(&mut self, v: ViewInfo) {
        self.a += v.a;
        self.b_blocks.push(v.b);
        self.c_blocks.push(v.c);
    }

    pub fn view_count(&self) -> usize {
        self.b_blocks.len()
    }
}

/// Assembles `A`, `Bᵢ`, `Cᵢ` over all views, summing `A` in view order.
pub fn assemble_info(
    views: &[ViewPair],
    rig: &StereoRig,
    mode: JacobianMode,
) -> Result<InfoBlocks> {
    if views.is_empty() {
        return Err(Error::InsufficientViews { needed: 1, got: 0 });
    }
    let infos = views
        .iter()
        .map(|v| view_info(rig, &v.board, &v.left_abs, mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(InfoBlocks::from_views(infos))
}
