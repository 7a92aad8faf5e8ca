//! Reverse-mode gradients of a per-pixel radiance loss with respect to every
//! raw Gaussian parameter.
//!
//! The pass runs in two stages. Pixels are processed in fixed bands of tile
//! rows, each band accumulating screen-space gradients (2D mean, conic,
//! color, opacity) into its own buffer; the buffers are summed in band order,
//! so results do not depend on the number of worker threads. The second stage
//! maps each splat's screen-space gradient through projection, covariance
//! construction, SH evaluation and the parametrization's activations.

mod fd;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

pub use fd::{finite_diff_gradients, finite_diff_scalar, finite_diff_set_gradients};

use crate::geometry::{position_vjp, rotation_vjp, scale_vjp};
use crate::image::Image;
use crate::render::{projection_jacobian, Camera, RenderOutput, Splat, TILE_SIZE};
use crate::scene::{sh, GaussianSet, ParamArrays};
use crate::{Error, Result};

/// Gradients for every raw parameter plus the screen-space densification
/// statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBuffer {
    pub params: ParamArrays,
    /// `|dL/d mean2d|` in normalized device units (pixel gradient times half
    /// the image size), zero for Gaussians not rendered.
    pub screen_grad_norm: Vec<f64>,
}

impl GradientBuffer {
    pub fn zeros_for(set: &GaussianSet) -> Self {
        Self {
            params: set.params.zeros_like(),
            screen_grad_norm: vec![0.0; set.len()],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.all_finite() && self.screen_grad_norm.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct ScreenGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    color: [f64; 3],
    opacity: f64,
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

fn band_gradients(out: &RenderOutput, d_radiance: &Image, y0: usize, y1: usize) -> Vec<ScreenGrad> {
    let mut acc = vec![ScreenGrad::default(); out.splats.len()];
    let mut contribs = Vec::new();
    let bg = out.background;
    for y in y0..y1 {
        for x in 0..out.width {
            let dl = d_radiance.pixel(x, y);
            if dl == [0.0; 3] {
                continue;
            }
            contribs.clear();
            out.composite_pixel(x, y, |c| contribs.push(c));
            // Color of everything behind the current splat, normalized by the
            // transmittance in front of it.
            let mut behind = bg;
            for c in contribs.iter().rev() {
                let s = &out.splats[c.splat];
                let g = &mut acc[c.splat];
                let w = c.alpha * c.transmittance;
                let mut d_alpha = 0.0;
                for ch in 0..3 {
                    g.color[ch] += w * dl[ch];
                    d_alpha += dl[ch] * c.transmittance * (s.color[ch] - behind[ch]);
                    behind[ch] = c.alpha * s.color[ch] + (1.0 - c.alpha) * behind[ch];
                }
                if c.saturated {
                    continue;
                }
                g.opacity += d_alpha * c.falloff;
                let d_power = d_alpha * s.opacity * c.falloff;
                let [a, b, cc] = s.conic;
                g.conic[0] += -0.5 * c.dx * c.dx * d_power;
                g.conic[1] += -c.dx * c.dy * d_power;
                g.conic[2] += -0.5 * c.dy * c.dy * d_power;
                g.mean[0] += (a * c.dx + b * c.dy) * d_power;
                g.mean[1] += (b * c.dx + cc * c.dy) * d_power;
            }
        }
    }
    acc
}

/// Per-Gaussian parameter gradients from one splat's screen-space gradient.
struct GaussianGrad {
    index: usize,
    position: [f64; 3],
    weight: f64,
    log_scale: [f64; 3],
    rotation: [f64; 4],
    opacity: f64,
    sh_dc: [f64; 3],
    sh_rest: Vec<f64>,
    screen_norm: f64,
}

fn chain_to_params(
    set: &GaussianSet,
    cam: &Camera,
    splat: &Splat,
    sg: &ScreenGrad,
) -> Result<GaussianGrad> {
    let i = splat.index;
    let p = set.parametrization;
    let raw = set.raw_geometry(i);
    let g = set.decode(i)?;

    // conic -> 2D covariance
    let conic = Matrix2::new(splat.conic[0], splat.conic[1], splat.conic[1], splat.conic[2]);
    let g_conic = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
    let g_cov2d = -(conic * g_conic * conic);

    // 2D covariance -> 3D covariance and Jacobian
    let t = cam.to_camera(&g.mean);
    let j = projection_jacobian(cam, &t);
    let w = cam.rotation;
    let m = j * w;
    let g_sigma: Matrix3<f64> = m.transpose() * g_cov2d * m;
    let g_m: Matrix2x3<f64> = 2.0 * g_cov2d * m * g.covariance;
    let g_j: Matrix2x3<f64> = g_m * w.transpose();

    // Jacobian and 2D mean -> camera-space position
    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let [gu, gv] = sg.mean;
    let g_t = Vector3::new(
        g_j[(0, 2)] * (-fx * iz2) + gu * fx * iz,
        g_j[(1, 2)] * (-fy * iz2) + gv * fy * iz,
        g_j[(0, 0)] * (-fx * iz2)
            + g_j[(0, 2)] * (2.0 * fx * t.x * iz3)
            + g_j[(1, 1)] * (-fy * iz2)
            + g_j[(1, 2)] * (2.0 * fy * t.y * iz3)
            - gu * fx * t.x * iz2
            - gv * fy * t.y * iz2,
    );
    let mut g_mean = w.transpose() * g_t;

    // SH color -> coefficients and view direction
    let degree = set.active_sh_degree;
    let view = g.mean - cam.center();
    let dist = view.norm();
    let dir = view / dist;
    let basis = sh::basis(&dir, degree);
    let d_color: [f64; 3] =
        [0, 1, 2].map(|ch| if splat.color_clamped[ch] { 0.0 } else { sg.color[ch] });
    let n_coeffs = sh::coeff_count(degree);
    let sh_dc = d_color.map(|d| d * basis[0]);
    let mut sh_rest = vec![0.0; set.rest_stride()];
    for k in 1..n_coeffs {
        for ch in 0..3 {
            sh_rest[(k - 1) * 3 + ch] = d_color[ch] * basis[k];
        }
    }
    if degree > 0 {
        let basis_grad = sh::basis_grad(&dir, degree);
        let coeffs = set.sh_coeffs(i);
        let mut g_dir = Vector3::zeros();
        for k in 1..n_coeffs {
            let wk: f64 = (0..3).map(|ch| d_color[ch] * coeffs[k][ch]).sum();
            g_dir += basis_grad[k] * wk;
        }
        g_mean += (g_dir - dir * dir.dot(&g_dir)) / dist;
    }

    // 3D covariance -> scale and rotation
    let rs = g.rotation * Matrix3::from_diagonal(&g.scale);
    let g_rs = 2.0 * g_sigma * rs;
    let mut g_scale = Vector3::zeros();
    let mut g_rot = Matrix3::zeros();
    for col in 0..3 {
        for row in 0..3 {
            g_scale[col] += g_rs[(row, col)] * g.rotation[(row, col)];
            g_rot[(row, col)] = g_rs[(row, col)] * g.scale[col];
        }
    }

    let (position, w_from_mean) = position_vjp(&raw, p, &g_mean);
    let (log_scale, w_from_scale) = scale_vjp(&g.scale, p, &g_scale);
    let rotation = rotation_vjp(raw.rotation, &g_rot);
    let o = splat.opacity;

    let half_w = cam.width as f64 / 2.0;
    let half_h = cam.height as f64 / 2.0;
    Ok(GaussianGrad {
        index: i,
        position,
        weight: w_from_mean + w_from_scale,
        log_scale,
        rotation,
        opacity: sg.opacity * o * (1.0 - o),
        sh_dc,
        sh_rest,
        screen_norm: (gu * half_w).hypot(gv * half_h),
    })
}

/// Gradients of `L` given `dL/d radiance` for a render of `set` from `cam`.
pub fn backward(
    set: &GaussianSet,
    cam: &Camera,
    out: &RenderOutput,
    d_radiance: &Image,
) -> Result<GradientBuffer> {
    if out.gaussian_count != set.len() {
        return Err(Error::ShapeMismatch(format!(
            "render output was produced for {} gaussians, set has {}",
            out.gaussian_count,
            set.len()
        )));
    }
    if d_radiance.width != out.width
        || d_radiance.height != out.height
        || cam.width != out.width
        || cam.height != out.height
    {
        return Err(Error::ShapeMismatch(format!(
            "gradient image {}x{}, render {}x{}, camera {}x{}",
            d_radiance.width, d_radiance.height, out.width, out.height, cam.width, cam.height
        )));
    }

    let bands: Vec<(usize, usize)> = (0..out.height)
        .step_by(TILE_SIZE)
        .map(|y0| (y0, (y0 + TILE_SIZE).min(out.height)))
        .collect();
    let partials: Vec<Vec<ScreenGrad>> = bands
        .par_iter()
        .map(|&(y0, y1)| band_gradients(out, d_radiance, y0, y1))
        .collect();
    let mut screen = vec![ScreenGrad::default(); out.splats.len()];
    for part in &partials {
        for (acc, g) in screen.iter_mut().zip(part) {
            acc.add(g);
        }
    }

    let per_gaussian: Vec<GaussianGrad> = out
        .splats
        .par_iter()
        .zip(screen.par_iter())
        .map(|(s, g)| chain_to_params(set, cam, s, g))
        .collect::<Result<_>>()?;

    let mut grads = GradientBuffer::zeros_for(set);
    let stride = set.rest_stride();
    let p = &mut grads.params;
    for g in per_gaussian {
        let i = g.index;
        p.positions[i] = g.position;
        p.weights[i] = g.weight;
        p.log_scales[i] = g.log_scale;
        p.rotations[i] = g.rotation;
        p.opacities[i] = g.opacity;
        p.sh_dc[i] = g.sh_dc;
        p.sh_rest[i * stride..(i + 1) * stride].copy_from_slice(&g.sh_rest);
        grads.screen_grad_norm[i] = g.screen_norm;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests;
