//! Real spherical harmonics up to degree 3, in the band ordering used by
//! common Gaussian splatting checkpoints (`m = -l..=l` within each band,
//! Condon-Shortley phase folded into the constants).

use nalgebra::Vector3;

pub const MAX_DEGREE: usize = 3;
pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of coefficients per channel for a given degree.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values `Y_k(dir)` for `k < coeff_count(degree)`; the rest stay zero.
pub fn basis(dir: &Vector3<f64>, degree: usize) -> [f64; 16] {
    let mut y = [0.0; 16];
    y[0] = SH_C0;
    if degree == 0 {
        return y;
    }
    let (x, yy, z) = (dir.x, dir.y, dir.z);
    y[1] = -SH_C1 * yy;
    y[2] = SH_C1 * z;
    y[3] = -SH_C1 * x;
    if degree == 1 {
        return y;
    }
    let (xx, y2, zz) = (x * x, yy * yy, z * z);
    let (xy, yz, xz) = (x * yy, yy * z, x * z);
    y[4] = SH_C2[0] * xy;
    y[5] = SH_C2[1] * yz;
    y[6] = SH_C2[2] * (2.0 * zz - xx - y2);
    y[7] = SH_C2[3] * xz;
    y[8] = SH_C2[4] * (xx - y2);
    if degree == 2 {
        return y;
    }
    y[9] = SH_C3[0] * yy * (3.0 * xx - y2);
    y[10] = SH_C3[1] * xy * z;
    y[11] = SH_C3[2] * yy * (4.0 * zz - xx - y2);
    y[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * y2);
    y[13] = SH_C3[4] * x * (4.0 * zz - xx - y2);
    y[14] = SH_C3[5] * z * (xx - y2);
    y[15] = SH_C3[6] * x * (xx - 3.0 * y2);
    y
}

/// Partial derivatives of each basis polynomial with respect to the
/// (unconstrained) direction components.
pub fn basis_grad(dir: &Vector3<f64>, degree: usize) -> [Vector3<f64>; 16] {
    let mut g = [Vector3::zeros(); 16];
    if degree == 0 {
        return g;
    }
    let (x, y, z) = (dir.x, dir.y, dir.z);
    g[1] = Vector3::new(0.0, -SH_C1, 0.0);
    g[2] = Vector3::new(0.0, 0.0, SH_C1);
    g[3] = Vector3::new(-SH_C1, 0.0, 0.0);
    if degree == 1 {
        return g;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    g[4] = Vector3::new(y, x, 0.0) * SH_C2[0];
    g[5] = Vector3::new(0.0, z, y) * SH_C2[1];
    g[6] = Vector3::new(-2.0 * x, -2.0 * y, 4.0 * z) * SH_C2[2];
    g[7] = Vector3::new(z, 0.0, x) * SH_C2[3];
    g[8] = Vector3::new(2.0 * x, -2.0 * y, 0.0) * SH_C2[4];
    if degree == 2 {
        return g;
    }
    g[9] = Vector3::new(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0) * SH_C3[0];
    g[10] = Vector3::new(y * z, x * z, x * y) * SH_C3[1];
    g[11] = Vector3::new(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z) * SH_C3[2];
    g[12] = Vector3::new(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy) * SH_C3[3];
    g[13] = Vector3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z) * SH_C3[4];
    g[14] = Vector3::new(2.0 * x * z, -2.0 * y * z, xx - yy) * SH_C3[5];
    g[15] = Vector3::new(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0) * SH_C3[6];
    g
}

/// Unclamped color `sum_k coeff_k Y_k(dir) + 0.5`.
pub fn eval_raw(coeffs: &[[f64; 3]], dir: &Vector3<f64>, degree: usize) -> [f64; 3] {
    let y = basis(dir, degree);
    let mut c = [0.5; 3];
    for (k, coeff) in coeffs.iter().enumerate().take(coeff_count(degree)) {
        for ch in 0..3 {
            c[ch] += coeff[ch] * y[k];
        }
    }
    c
}

/// View-dependent RGB color clamped to `[0, 1]`.
pub fn eval_sh_color(coeffs: &[[f64; 3]], dir: &Vector3<f64>, degree: usize) -> [f64; 3] {
    eval_raw(coeffs, dir, degree).map(|v| v.clamp(0.0, 1.0))
}

pub fn rgb_to_dc(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

pub fn dc_to_rgb(dc: [f64; 3]) -> [f64; 3] {
    dc.map(|c| c * SH_C0 + 0.5)
}
