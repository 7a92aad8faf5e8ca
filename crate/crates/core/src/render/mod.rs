//! Forward rasterization: projection, global depth sort and front-to-back
//! alpha compositing.
//!
//! Splats are binned into 16x16 pixel tiles purely to shorten per-pixel
//! candidate lists. Every pixel still tests each candidate against its
//! bounding box, so output is identical to an unbinned traversal. Pixel
//! centres sit at integer coordinates.

mod camera;
mod project;

use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use camera::{orthonormalize, rotation_deviation, Camera};
pub use project::{max_eigenvalue, project_gaussian, projection_jacobian, Projected2D};

use crate::image::Image;
use crate::scene::{sh, GaussianSet};

pub const TILE_SIZE: usize = 16;
pub const ALPHA_MAX: f64 = 0.999;
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
const SINGULAR_DET: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub background: [f64; 3],
    pub near_clip: f64,
    /// Added to both diagonal entries of every screen-space covariance (px^2).
    pub dilation: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            background: [0.0; 3],
            near_clip: 0.01,
            dilation: 0.3,
        }
    }
}

/// A projected Gaussian ready for compositing.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat {
    /// Index into the source `GaussianSet`.
    pub index: usize,
    pub mean: [f64; 2],
    /// Upper triangle `(a, b, c)` of the inverse screen covariance.
    pub conic: [f64; 3],
    pub cov2d: Matrix2<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Channels where the SH color hit the `[0, 1]` clamp.
    pub color_clamped: [bool; 3],
    pub depth: f64,
    pub radius: f64,
}

impl Splat {
    /// Gaussian falloff at a pixel, or `None` outside the bounding box.
    #[inline]
    pub fn falloff(&self, px: f64, py: f64) -> Option<(f64, f64, f64)> {
        let dx = px - self.mean[0];
        let dy = py - self.mean[1];
        if dx.abs() > self.radius || dy.abs() > self.radius {
            return None;
        }
        let [a, b, c] = self.conic;
        let power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
        if power > 0.0 {
            return None;
        }
        Some((power.exp(), dx, dy))
    }
}

/// One compositing step recorded for a pixel.
#[derive(Clone, Copy, Debug)]
pub struct Contribution {
    /// Index into `RenderOutput::splats`.
    pub splat: usize,
    pub alpha: f64,
    pub falloff: f64,
    pub dx: f64,
    pub dy: f64,
    /// Transmittance before this splat.
    pub transmittance: f64,
    /// `opacity * falloff` exceeded the alpha ceiling.
    pub saturated: bool,
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub radiance: Image,
    pub alpha: Vec<f64>,
    pub depth_expected: Vec<f64>,
    pub background: [f64; 3],
    /// Visible splats in compositing order.
    pub splats: Vec<Splat>,
    /// Screen radius per Gaussian (0 when not rendered).
    pub radii: Vec<f64>,
    pub gaussian_count: usize,
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
}

impl RenderOutput {
    /// Walks the compositing sequence of one pixel, front to back. Returns
    /// the final transmittance.
    pub fn composite_pixel(&self, x: usize, y: usize, mut visit: impl FnMut(Contribution)) -> f64 {
        let tile = &self.tiles[(y / TILE_SIZE) * self.tiles_x + x / TILE_SIZE];
        composite(&self.splats, tile, x as f64, y as f64, &mut visit)
    }
}

#[inline]
fn composite(
    splats: &[Splat],
    candidates: &[u32],
    px: f64,
    py: f64,
    visit: &mut impl FnMut(Contribution),
) -> f64 {
    let mut t = 1.0;
    for &si in candidates {
        let s = &splats[si as usize];
        let Some((g, dx, dy)) = s.falloff(px, py) else {
            continue;
        };
        let raw = s.opacity * g;
        let alpha = raw.min(ALPHA_MAX);
        if alpha < ALPHA_MIN {
            continue;
        }
        visit(Contribution {
            splat: si as usize,
            alpha,
            falloff: g,
            dx,
            dy,
            transmittance: t,
            saturated: raw > ALPHA_MAX,
        });
        t *= 1.0 - alpha;
        if t < TRANSMITTANCE_MIN {
            break;
        }
    }
    t
}

/// Projects every decodable Gaussian and returns the visible splats sorted
/// by depth (ties broken by index).
pub fn prepare_splats(set: &GaussianSet, cam: &Camera, cfg: &RenderConfig) -> Vec<Splat> {
    let cam_center = cam.center();
    let degree = set.active_sh_degree;
    let mut splats: Vec<Splat> = (0..set.len())
        .into_par_iter()
        .filter_map(|i| {
            let g = set.decode(i).ok()?;
            let p = project_gaussian(&g.mean, &g.covariance, cam, cfg);
            if !p.valid {
                return None;
            }
            let det = p.cov2d.determinant();
            if !(det > SINGULAR_DET) {
                return None;
            }
            let inv = 1.0 / det;
            let conic = [
                p.cov2d[(1, 1)] * inv,
                -p.cov2d[(0, 1)] * inv,
                p.cov2d[(0, 0)] * inv,
            ];
            let dir = (g.mean - cam_center).normalize();
            let raw = sh::eval_raw(&set.sh_coeffs(i), &dir, degree);
            Some(Splat {
                index: i,
                mean: [p.mean2d.x, p.mean2d.y],
                conic,
                cov2d: p.cov2d,
                opacity: set.opacity(i),
                color: raw.map(|c| c.clamp(0.0, 1.0)),
                color_clamped: raw.map(|c| !(0.0..=1.0).contains(&c)),
                depth: p.depth,
                radius: p.radius,
            })
        })
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    splats
}

fn bin_tiles(splats: &[Splat], width: usize, height: usize) -> (Vec<Vec<u32>>, usize) {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        let x0 = (s.mean[0] - s.radius).ceil().max(0.0);
        let x1 = (s.mean[0] + s.radius).floor().min(width as f64 - 1.0);
        let y0 = (s.mean[1] - s.radius).ceil().max(0.0);
        let y1 = (s.mean[1] + s.radius).floor().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let (tx0, tx1) = (x0 as usize / TILE_SIZE, x1 as usize / TILE_SIZE);
        let (ty0, ty1) = (y0 as usize / TILE_SIZE, y1 as usize / TILE_SIZE);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                tiles[ty * tiles_x + tx].push(si as u32);
            }
        }
    }
    (tiles, tiles_x)
}

pub fn render(set: &GaussianSet, cam: &Camera, cfg: &RenderConfig) -> RenderOutput {
    let (w, h) = (cam.width, cam.height);
    let splats = prepare_splats(set, cam, cfg);
    let (tiles, tiles_x) = bin_tiles(&splats, w, h);
    let mut radii = vec![0.0; set.len()];
    for s in &splats {
        radii[s.index] = s.radius;
    }

    let bg = cfg.background;
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut rad = Vec::with_capacity(w * 3);
            let mut alpha = Vec::with_capacity(w);
            let mut depth = Vec::with_capacity(w);
            for x in 0..w {
                let tile = &tiles[(y / TILE_SIZE) * tiles_x + x / TILE_SIZE];
                let mut c = [0.0; 3];
                let mut d = 0.0;
                let t_final = composite(&splats, tile, x as f64, y as f64, &mut |k| {
                    let s = &splats[k.splat];
                    let wgt = k.alpha * k.transmittance;
                    for ch in 0..3 {
                        c[ch] += wgt * s.color[ch];
                    }
                    d += wgt * s.depth;
                });
                let a = 1.0 - t_final;
                for ch in 0..3 {
                    rad.push(c[ch] + t_final * bg[ch]);
                }
                alpha.push(a);
                depth.push(d / a.max(1e-6));
            }
            (rad, alpha, depth)
        })
        .collect();

    let mut radiance = Vec::with_capacity(w * h * 3);
    let mut alpha = Vec::with_capacity(w * h);
    let mut depth_expected = Vec::with_capacity(w * h);
    for (r, a, d) in rows {
        radiance.extend(r);
        alpha.extend(a);
        depth_expected.extend(d);
    }

    RenderOutput {
        width: w,
        height: h,
        radiance: Image {
            width: w,
            height: h,
            data: radiance,
        },
        alpha,
        depth_expected,
        background: bg,
        splats,
        radii,
        gaussian_count: set.len(),
        tiles,
        tiles_x,
    }
}

/// Mean direction from camera to Gaussian, used for SH evaluation.
pub fn view_direction(cam: &Camera, mean: &Vector3<f64>) -> Vector3<f64> {
    (mean - cam.center()).normalize()
}
