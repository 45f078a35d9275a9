//! Relative-extrinsics covariance through the Schur complement of `JᵀJ`.
//!
//! `Σ = (A − Σᵢ Cᵢ Bᵢ⁻¹ Cᵢᵀ)⁻¹`, the upper-left 6×6 block of `(JᵀJ)⁻¹`.
//! Measurement noise `σ²` is omitted: it scales every candidate's trace
//! equally and so never changes which pose is best.

use nalgebra::{Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::InfoBlocks;
use crate::serde_util;

/// Condition number, after Jacobi scaling, above which an information matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Plain trace weights.
pub const UNIT_WEIGHTS: [f64; 6] = [1.0; 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    /// Rotation block first (rad²), translation block last (mm²).
    #[serde(with = "serde_util::mat6")]
    pub sigma: Matrix6<f64>,
    pub trace: f64,
    /// Condition number of the Schur complement as is, rad and mm mixed.
    pub condition: f64,
}

fn symmetrize(m: &Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

fn condition_number(m: &Matrix6<f64>) -> f64 {
    let eig = SymmetricEigen::new(*m);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `D m D` with `D = diag(m)^-½`, or `None` if a diagonal entry is not positive.
fn jacobi_scaling(m: &Matrix6<f64>) -> Option<(Matrix6<f64>, nalgebra::Vector6<f64>)> {
    let d = m.diagonal();
    if d.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let d = d.map(|v| 1.0 / v.sqrt());
    Some((Matrix6::from_fn(|r, c| d[r] * m[(r, c)] * d[c]), d))
}

/// Scales `m`, failing if the scaled matrix is too ill-conditioned to factor.
///
/// The raw condition mixes rad and mm blocks, so a large raw value alone is
/// not a sign of degeneracy.
fn scaled_or_singular(m: &Matrix6<f64>) -> Result<(Matrix6<f64>, nalgebra::Vector6<f64>)> {
    let (scaled, d) = jacobi_scaling(m).ok_or(Error::SingularInformation {
        condition: f64::INFINITY,
    })?;
    let cond = condition_number(&scaled);
    if !(cond <= SINGULAR_CONDITION) {
        return Err(Error::SingularInformation { condition: cond });
    }
    Ok((scaled, d))
}

/// Sum of the per-view marginalized information terms, `A − C B⁻¹ Cᵀ`.
pub fn schur_complement(info: &InfoBlocks) -> Result<Matrix6<f64>> {
    let mut s = info.a;
    for (b, c) in info.b_blocks.iter().zip(&info.c_blocks) {
        let (scaled_b, d) = scaled_or_singular(&symmetrize(b))?;
        let scaled_c = Matrix6::from_fn(|r, k| c[(r, k)] * d[k]);
        let chol = scaled_b.cholesky().ok_or(Error::SingularInformation {
            condition: f64::INFINITY,
        })?;
        s -= scaled_c * chol.solve(&scaled_c.transpose());
    }
    Ok(symmetrize(&s))
}

/// Covariance from an already reduced (Schur-complement) information matrix.
pub fn covariance_from_reduced(reduced: &Matrix6<f64>) -> Result<CovarianceReport> {
    let s = symmetrize(reduced);
    let condition = condition_number(&s);
    let (scaled, d) = scaled_or_singular(&s)?;
    let chol = scaled
        .cholesky()
        .ok_or(Error::SingularInformation { condition })?;
    let inv = chol.inverse();
    let sigma = symmetrize(&Matrix6::from_fn(|r, c| d[r] * inv[(r, c)] * d[c]));
    Ok(CovarianceReport {
        trace: sigma.trace(),
        sigma,
        condition,
    })
}

pub fn relative_covariance(info: &InfoBlocks) -> Result<CovarianceReport> {
    covariance_from_reduced(&schur_complement(info)?)
}

/// Weighted trace `Σₖ wₖ·Σₖₖ`; unit weights give the plain trace.
pub fn trace_objective(report: &CovarianceReport, weights: &[f64; 6]) -> f64 {
    (0..6).map(|k| weights[k] * report.sigma[(k, k)]).sum()
}
