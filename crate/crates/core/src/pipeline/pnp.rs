//! Planar PnP: homography initialization followed by Levenberg–Marquardt.

use nalgebra::{DMatrix, Matrix3, Matrix6, SymmetricEigen, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{skew, BoardSpec, CameraModel, Pose};

const MAX_ITERS: usize = 100;

/// Board pose from one camera's corner observations.
pub fn solve_pnp(board: &BoardSpec, pixels: &[Vector2<f64>], model: &CameraModel) -> Result<Pose> {
    if pixels.len() != board.corner_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} pixels for a {}-corner board",
            pixels.len(),
            board.corner_count()
        )));
    }
    solve_pnp_points(&board.corners(), pixels, model)
}

/// PnP for arbitrary points on the `Z = 0` plane.
pub fn solve_pnp_points(
    object: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    model: &CameraModel,
) -> Result<Pose> {
    if object.len() != pixels.len() {
        return Err(Error::DimensionMismatch(
            "object/pixel count differs".into(),
        ));
    }
    if object.len() < 4 {
        return Err(Error::InsufficientPoints { got: object.len() });
    }
    if object.iter().any(|p| p.z.abs() > 1e-9) {
        return Err(Error::InvalidConfig(
            "planar PnP needs Z = 0 object points".into(),
        ));
    }
    check_not_collinear(object)?;
    let normalized = pixels
        .iter()
        .map(|p| model.unproject(p))
        .collect::<Result<Vec<_>>>()?;
    let init = homography_pose(object, &normalized)?;
    Ok(refine(object, pixels, model, init))
}

fn check_not_collinear(object: &[Vector3<f64>]) -> Result<()> {
    let n = object.len() as f64;
    let mean = object.iter().map(|p| p.xy()).sum::<Vector2<f64>>() / n;
    let mut cov = nalgebra::Matrix2::zeros();
    for p in object {
        let d = p.xy() - mean;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if hi <= 0.0 || lo <= 1e-12 * hi {
        return Err(Error::DegenerateConfiguration);
    }
    Ok(())
}

/// Similarity that moves the centroid to the origin and the mean distance to √2.
fn normalizer(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector2<f64>>() / n;
    let spread = points.iter().map(|p| (p - mean).norm()).sum::<f64>() / n;
    let s = if spread > 0.0 {
        std::f64::consts::SQRT_2 / spread
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * mean.x, 0.0, s, -s * mean.y, 0.0, 0.0, 1.0)
}

fn apply(h: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// DLT homography from the board plane to normalized image coordinates,
/// decomposed into a rotation and translation.
fn homography_pose(object: &[Vector3<f64>], image: &[Vector2<f64>]) -> Result<Pose> {
    let src: Vec<Vector2<f64>> = object.iter().map(|p| p.xy()).collect();
    let ts = normalizer(&src);
    let ti = normalizer(image);
    let mut a = DMatrix::<f64>::zeros(2 * src.len(), 9);
    for (k, (s, d)) in src.iter().zip(image).enumerate() {
        let s = apply(&ts, s);
        let d = apply(&ti, d);
        let row = [s.x, s.y, 1.0];
        for c in 0..3 {
            a[(2 * k, c)] = row[c];
            a[(2 * k, 6 + c)] = -d.x * row[c];
            a[(2 * k + 1, 3 + c)] = row[c];
            a[(2 * k + 1, 6 + c)] = -d.y * row[c];
        }
    }
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let imin = eig.eigenvalues.imin();
    let h = eig.eigenvectors.column(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let ti_inv = ti.try_inverse().ok_or(Error::DegenerateConfiguration)?;
    let hm = ti_inv * hn * ts;

    let h1 = hm.column(0).into_owned();
    let h2 = hm.column(1).into_owned();
    let h3 = hm.column(2).into_owned();
    let mut scale = 2.0 / (h1.norm() + h2.norm());
    if (scale * h3).z < 0.0 {
        scale = -scale;
    }
    let r1 = scale * h1;
    let r2 = scale * h2;
    let r3 = r1.cross(&r2);
    let approx = Matrix3::from_columns(&[r1, r2, r3]);
    let svd = approx.svd(true, true);
    let (u, vt) = (
        svd.u.ok_or(Error::DegenerateConfiguration)?,
        svd.v_t.ok_or(Error::DegenerateConfiguration)?,
    );
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    Ok(Pose::from_matrix(&r, scale * h3))
}

fn cost(object: &[Vector3<f64>], pixels: &[Vector2<f64>], model: &CameraModel, pose: &Pose) -> f64 {
    object
        .iter()
        .zip(pixels)
        .map(
            |(p, obs)| match model.project_camera_point(&pose.transform(p)) {
                Ok(px) => (obs - px).norm_squared(),
                Err(_) => f64::INFINITY,
            },
        )
        .sum()
}

/// Monocular Levenberg–Marquardt on the reprojection error.
fn refine(
    object: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    model: &CameraModel,
    init: Pose,
) -> Pose {
    let mut pose = init;
    let mut current = cost(object, pixels, model, &pose);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERS {
        if current < 1e-24 {
            break;
        }
        let r = pose.rotation();
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for (p, obs) in object.iter().zip(pixels) {
            let q = r * p + pose.tvec;
            let Ok((px, jp)) = model.project_with_jacobian(&q) else {
                continue;
            };
            let mut dq = nalgebra::Matrix3x6::zeros();
            dq.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&q)));
            dq.fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&Matrix3::identity());
            let j = -(jp * dq);
            let e = obs - px;
            h += j.transpose() * j;
            g += j.transpose() * e;
        }
        let mut accepted = false;
        for _ in 0..10 {
            let mut damped = h;
            for k in 0..6 {
                damped[(k, k)] += lambda * h[(k, k)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&-g);
            let candidate = pose.retract(&step);
            let c = cost(object, pixels, model, &candidate);
            if c < current {
                let rel = (current - c) / current;
                pose = candidate;
                current = c;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < 1e-12 {
                    return pose;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    pose
}
