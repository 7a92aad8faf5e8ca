use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

/// Pinhole camera with a rigid world-to-camera transform. Camera axes follow
/// the usual vision convention: +x right, +y down, +z forward.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image size must be non-zero".into()));
        }
        let dev = rotation_deviation(&rotation);
        if dev > 1e-9 || rotation.determinant() < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "world-to-camera rotation is not a proper rotation (deviation {dev:e})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        })
    }

    /// Camera at `eye` looking towards `target`, with `up` pointing up in the
    /// image.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() == 0.0 {
            return Err(Error::InvalidArgument("look_at target equals eye".into()));
        }
        let z = forward.normalize();
        let down = -(up - z * up.dot(&z));
        if down.norm() < 1e-12 {
            return Err(Error::InvalidArgument("up vector is parallel to view".into()));
        }
        let y = down.normalize();
        let x = y.cross(&z);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        Self::new(
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
        )
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    #[inline]
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Max-abs deviation of `R^T R` from the identity.
pub fn rotation_deviation(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Nearest proper rotation via the polar decomposition.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_maps_target_to_principal_point() {
        let cam = Camera::look_at(
            Vector3::new(1.0, 2.0, -3.0),
            Vector3::new(0.0, 0.0, 5.0),
            Vector3::y(),
            50.0,
            50.0,
            64,
            48,
        )
        .unwrap();
        let t = cam.to_camera(&Vector3::new(0.0, 0.0, 5.0));
        assert!(t.x.abs() < 1e-12 && t.y.abs() < 1e-12 && t.z > 0.0);
        assert!((cam.center() - Vector3::new(1.0, 2.0, -3.0)).norm() < 1e-12);
        assert!((cam.rotation.determinant() - 1.0).abs() < 1e-12);
        // World up appears towards the top of the image (negative camera y).
        let above = cam.to_camera(&Vector3::new(0.0, 1.0, 5.0));
        assert!(above.y < 0.0);
    }

    #[test]
    fn rejects_bad_intrinsics_and_rotations() {
        let r = Matrix3::identity();
        assert!(Camera::new(0.0, 1.0, 0.0, 0.0, 4, 4, r, Vector3::zeros()).is_err());
        let mut skew = r;
        skew[(0, 1)] = 1e-3;
        assert!(Camera::new(1.0, 1.0, 0.0, 0.0, 4, 4, skew, Vector3::zeros()).is_err());
        let mirror = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Camera::new(1.0, 1.0, 0.0, 0.0, 4, 4, mirror, Vector3::zeros()).is_err());
    }

    #[test]
    fn orthonormalize_fixes_small_skew() {
        let mut r = Matrix3::identity();
        r[(0, 1)] = 1e-7;
        let fixed = orthonormalize(&r);
        assert!(rotation_deviation(&fixed) < 1e-14);
        assert!((fixed - r).abs().max() < 1e-6);
    }
}
