use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::{Camera, RenderConfig};

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected2D {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Camera-space z.
    pub depth: f64,
    /// Three standard deviations along the major axis, in pixels.
    pub radius: f64,
    pub valid: bool,
}

impl Projected2D {
    fn invalid(depth: f64) -> Self {
        Self {
            mean2d: Vector2::zeros(),
            cov2d: Matrix2::zeros(),
            depth,
            radius: 0.0,
            valid: false,
        }
    }
}

/// Jacobian of the perspective projection at camera-space point `t`.
#[inline]
pub fn projection_jacobian(cam: &Camera, t: &Vector3<f64>) -> Matrix2x3<f64> {
    let inv_z = 1.0 / t.z;
    let inv_z2 = inv_z * inv_z;
    Matrix2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * t.x * inv_z2,
        0.0,
        cam.fy * inv_z,
        -cam.fy * t.y * inv_z2,
    )
}

pub fn max_eigenvalue(m: &Matrix2<f64>) -> f64 {
    let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    mid + (mid * mid - det).max(0.0).sqrt()
}

/// Local affine (EWA) projection of a world-space Gaussian.
pub fn project_gaussian(
    mean: &Vector3<f64>,
    cov: &Matrix3<f64>,
    cam: &Camera,
    cfg: &RenderConfig,
) -> Projected2D {
    let t = cam.to_camera(mean);
    if !(t.z > cfg.near_clip) {
        return Projected2D::invalid(t.z);
    }
    let mean2d = Vector2::new(cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy);
    let m = projection_jacobian(cam, &t) * cam.rotation;
    let cov2d = m * cov * m.transpose() + Matrix2::identity() * cfg.dilation;
    let lambda = max_eigenvalue(&cov2d);
    let radius = 3.0 * lambda.max(0.0).sqrt();
    let finite = mean2d.iter().chain(cov2d.iter()).all(|v| v.is_finite());
    Projected2D {
        mean2d,
        cov2d,
        depth: t.z,
        radius,
        valid: finite && radius > 0.0,
    }
}
