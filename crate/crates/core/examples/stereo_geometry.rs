//! Projects the board into both cameras of the reference rig and triangulates
//! the corners back.
//!
//! `cargo run --example stereo_geometry`

use calibguide::geometry::{compose_right_extrinsics, project, triangulate};
use calibguide::simharness::{reference_board, reference_rig};
use calibguide::Pose;
use nalgebra::Vector3;

fn main() -> calibguide::Result<()> {
    let rig = reference_rig();
    let board = reference_board();
    // Board 1.5 m ahead, centred between the cameras, tilted 20 degrees about x.
    let c = board.center();
    let left = Pose::new(
        Vector3::new(0.35, 0.0, 0.0),
        Vector3::new(220.0 - c.x, -c.y, 1500.0),
    );
    let right = compose_right_extrinsics(&rig.relative, &left);
    println!("baseline {:.1} mm", rig.relative.center().norm());

    let mut worst: f64 = 0.0;
    let mut inside = true;
    for (j, p) in board.corners().iter().enumerate() {
        let pl = project(&rig.left, &left, p)?;
        let pr = project(&rig.right, &right, p)?;
        let back = triangulate(&rig, &left, &pl, &pr)?;
        worst = worst.max((back - p).norm());
        inside &= rig.left.in_image(&pl, 0.0) && rig.right.in_image(&pr, 0.0);
        if j % 18 == 0 {
            println!(
                "corner {j:2}: left ({:7.2}, {:7.2})  right ({:7.2}, {:7.2})",
                pl.x, pl.y, pr.x, pr.y
            );
        }
    }
    println!("all corners inside both images: {inside}");
    println!(
        "max triangulation error over {} corners: {worst:.2e} mm",
        board.corner_count()
    );
    Ok(())
}
