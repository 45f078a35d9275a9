//! Compares the analytic Jacobian blocks of one view with central finite
//! differences of its reprojection residuals.
//!
//! `cargo run --example jacobian_check`

use calibguide::jacobian::{block_u, block_v, block_v_right, residuals};
use calibguide::simharness::{reference_board, reference_rig};
use calibguide::{Pose, StereoRig, ViewPair};
use nalgebra::{DMatrix, Vector3, Vector6};

const STEP: f64 = 1e-6;

fn numeric(f: impl Fn(&Vector6<f64>) -> nalgebra::DVector<f64>) -> DMatrix<f64> {
    let cols: Vec<_> = (0..6)
        .map(|k| {
            let d = Vector6::from_fn(|i, _| if i == k { STEP } else { 0.0 });
            (f(&d) - f(&-d)) / (2.0 * STEP)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn main() -> calibguide::Result<()> {
    let rig: StereoRig = reference_rig();
    let board = reference_board();
    let pose = Pose::new(
        Vector3::new(0.2, -0.3, 0.1),
        Vector3::new(-30.0, -15.0, 350.0),
    );
    let view = ViewPair::exact(&rig, &board, &pose)?;
    let n = 2 * board.corner_count();

    let wrt_left = numeric(|d| {
        residuals(&view.with_left_abs(pose.retract(d)), &rig)
            .unwrap()
            .stacked()
    });
    let wrt_relative = numeric(|d| {
        residuals(&view, &rig.with_relative(rig.relative.retract(d)))
            .unwrap()
            .stacked()
    });

    let checks = [
        (
            "V  (left rows, left pose)",
            block_v(&view, &rig)?,
            wrt_left.rows(0, n).into_owned(),
        ),
        (
            "V' (right rows, left pose)",
            block_v_right(&view, &rig)?,
            wrt_left.rows(n, n).into_owned(),
        ),
        (
            "U  (right rows, relative)",
            block_u(&view, &rig)?,
            wrt_relative.rows(n, n).into_owned(),
        ),
    ];
    for (name, analytic, fd) in &checks {
        println!(
            "{name}: {}x{}, relative error {:.2e}",
            analytic.nrows(),
            analytic.ncols(),
            rel_err(analytic, fd)
        );
    }
    Ok(())
}
