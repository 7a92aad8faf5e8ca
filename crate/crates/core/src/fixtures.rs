//! Deterministic synthetic scenes for tests, benchmarks and the acceptance
//! suite.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{encode_from_cartesian, Parametrization};
use crate::image::{DepthMap, Image};
use crate::io::{self, SceneManifest, ViewEntry};
use crate::render::{prepare_splats, render, Camera, RenderConfig, ALPHA_MAX, ALPHA_MIN, TRANSMITTANCE_MIN};
use crate::scene::{logit, sh, GaussianSet, PointCloud};
use crate::{Error, Result};

/// Shape of the small random scenes used for gradient checks.
#[derive(Clone, Debug)]
pub struct GradcheckSceneSpec {
    pub max_gaussians: usize,
    pub min_size: usize,
    pub max_size: usize,
}

impl Default for GradcheckSceneSpec {
    fn default() -> Self {
        Self {
            max_gaussians: 10,
            min_size: 8,
            max_size: 16,
        }
    }
}

fn random_quaternion<R: Rng>(rng: &mut R) -> [f64; 4] {
    loop {
        let q = Vector4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let n = q.norm();
        if n > 0.2 && n <= 1.0 {
            // Unnormalized on purpose: the renderer renormalizes.
            let s = rng.gen_range(0.5..2.0);
            return [q[0] * s, q[1] * s, q[2] * s, q[3] * s];
        }
    }
}

/// Random scene of at most `spec.max_gaussians` Gaussians in front of a
/// random camera. Scenes whose render sits within a finite-difference step
/// of a compositing discontinuity (alpha threshold, bounding-box edge,
/// transmittance cutoff, depth swap, color clamp) are rejected and redrawn.
pub fn random_gradcheck_scene<R: Rng>(
    rng: &mut R,
    p: Parametrization,
    spec: &GradcheckSceneSpec,
) -> (GaussianSet, Camera) {
    loop {
        let (set, cam) = draw_gradcheck_scene(rng, p, spec);
        if is_smooth_at(&set, &cam) {
            return (set, cam);
        }
    }
}

fn draw_gradcheck_scene<R: Rng>(
    rng: &mut R,
    p: Parametrization,
    spec: &GradcheckSceneSpec,
) -> (GaussianSet, Camera) {
    let w = rng.gen_range(spec.min_size..=spec.max_size);
    let h = rng.gen_range(spec.min_size..=spec.max_size);
    let f = rng.gen_range(0.9..1.4) * w.max(h) as f64;
    let eye = Vector3::from_fn(|_, _| rng.gen_range(-0.3..0.3));
    let target = Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), 4.0);
    let up = Vector3::new(rng.gen_range(-0.3..0.3), -1.0, 0.0);
    let cam = Camera::look_at(eye, target, up, f, f, w, h).expect("valid random camera");

    let n = rng.gen_range(1..=spec.max_gaussians);
    let mut set = GaussianSet::new(p, sh::MAX_DEGREE);
    set.active_sh_degree = rng.gen_range(0..=sh::MAX_DEGREE);
    let n_rest = sh::coeff_count(set.active_sh_degree) - 1;
    for _ in 0..n {
        let z: f64 = rng.gen_range(2.5..5.0);
        let u = rng.gen_range(0.2..0.8) * w as f64;
        let v = rng.gen_range(0.2..0.8) * h as f64;
        let t = Vector3::new((u - cam.cx) * z / f, (v - cam.cy) * z / f, z);
        let mu = cam.rotation.transpose() * (t - cam.translation);
        let sigma_px: f64 = rng.gen_range(0.8..2.5);
        let scale = Vector3::from_fn(|_, _| sigma_px * z / f * rng.gen_range(0.6..1.6));
        let hint = (p == Parametrization::Homogeneous).then(|| rng.gen_range(0.3f64.ln()..3f64.ln()).exp());
        let raw = encode_from_cartesian(mu, scale, random_quaternion(rng), p, hint)
            .expect("encodable random gaussian");
        let rgb = [0; 3].map(|_| rng.gen_range(0.2..0.8));
        let rest: Vec<f64> = (0..n_rest * 3).map(|_| rng.gen_range(-0.03..0.03)).collect();
        let opacity = rng.gen_range(0.05..0.9);
        set.push(&raw, logit(opacity), sh::rgb_to_dc(rgb), &rest);
    }
    (set, cam)
}

/// True when every compositing decision of the render is stable under small
/// parameter perturbations.
fn is_smooth_at(set: &GaussianSet, cam: &Camera) -> bool {
    let cfg = RenderConfig::default();
    let splats = prepare_splats(set, cam, &cfg);
    if splats.len() != set.len() {
        return false;
    }
    if splats.windows(2).any(|s| s[1].depth - s[0].depth < 1e-2) {
        return false;
    }
    let cam_center = cam.center();
    for s in &splats {
        let mean = set.decode_mean(s.index).expect("decodable");
        let dir = (mean - cam_center).normalize();
        let raw = sh::eval_raw(&set.sh_coeffs(s.index), &dir, set.active_sh_degree);
        if raw.iter().any(|&c| !(0.01..=0.99).contains(&c)) {
            return false;
        }
    }
    const EDGE_MARGIN: f64 = 0.01;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let mut t = 1.0;
            for s in &splats {
                let dx = x as f64 - s.mean[0];
                let dy = y as f64 - s.mean[1];
                let [a, b, c] = s.conic;
                let power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
                let raw = s.opacity * power.exp();
                if (raw * 255.0).ln().abs() < 5e-3 || raw > ALPHA_MAX * 0.99 {
                    return false;
                }
                let near_x = (dx.abs() - s.radius).abs() < EDGE_MARGIN && dy.abs() <= s.radius + EDGE_MARGIN;
                let near_y = (dy.abs() - s.radius).abs() < EDGE_MARGIN && dx.abs() <= s.radius + EDGE_MARGIN;
                if raw >= 0.9 * ALPHA_MIN && (near_x || near_y) {
                    return false;
                }
                let inside = dx.abs() <= s.radius && dy.abs() <= s.radius;
                if inside && raw >= ALPHA_MIN {
                    t *= 1.0 - raw;
                }
            }
            if t < 2.0 * TRANSMITTANCE_MIN {
                return false;
            }
        }
    }
    true
}

/// Layout of the near-plus-far synthetic scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    pub seed: u64,
    pub near_count: usize,
    /// Center of the near cluster.
    pub near_center: [f64; 3],
    /// Radius of the ball the near means are drawn from.
    pub near_spread: f64,
    pub near_scale: f64,
    pub far_count: usize,
    /// Far means lie at a distance drawn uniformly from this range.
    pub far_distance: [f64; 2],
    pub far_scale: f64,
    /// Far means lie within this angle of the +z axis.
    pub far_cone_deg: f64,
    pub camera_count: usize,
    pub camera_radius: f64,
    pub width: usize,
    pub height: usize,
    /// Focal length as a fraction of the image width.
    pub focal_factor: f64,
    /// Half-width of the uniform noise added to near init points.
    pub init_noise: f64,
    /// Fraction of far Gaussians that contribute an init point.
    pub far_init_fraction: f64,
    /// Far init points are pulled towards the origin by a factor drawn
    /// log-uniformly from this range, mimicking triangulation error at
    /// small baselines.
    pub far_init_depth_factor: [f64; 2],
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            near_count: 120,
            near_center: [0.0, 0.0, 5.0],
            near_spread: 1.0,
            near_scale: 0.12,
            far_count: 500,
            far_distance: [400.0, 600.0],
            far_scale: 20.0,
            far_cone_deg: 60.0,
            camera_count: 16,
            camera_radius: 2.0,
            width: 64,
            height: 64,
            focal_factor: 0.8,
            init_noise: 0.05,
            far_init_fraction: 0.5,
            far_init_depth_factor: [0.1, 0.5],
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic scene: {m}")));
        if self.near_count + self.far_count == 0 {
            return bad("no gaussians");
        }
        if self.camera_count == 0 || self.width == 0 || self.height == 0 {
            return bad("needs at least one camera and a non-empty image");
        }
        if !(self.near_scale > 0.0 && self.far_scale > 0.0 && self.focal_factor > 0.0) {
            return bad("scales and focal factor must be positive");
        }
        if !(0.0 < self.far_distance[0] && self.far_distance[0] <= self.far_distance[1]) {
            return bad("far distance range");
        }
        if !(0.0 < self.far_init_depth_factor[0] && self.far_init_depth_factor[0] <= self.far_init_depth_factor[1]) {
            return bad("far init depth factor range");
        }
        if !(0.0..=1.0).contains(&self.far_init_fraction) {
            return bad("far init fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Ground truth and inputs for one synthetic scene.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SyntheticSceneSpec,
    /// Cartesian ground-truth set; the first `spec.near_count` entries are
    /// the near cluster.
    pub gt: GaussianSet,
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    pub depths: Vec<DepthMap>,
    /// Sparse points a reconstruction pipeline would start from.
    pub init_cloud: PointCloud,
}

/// Renders the ground truth from every camera. Fails when a camera misses
/// the near cluster or the far shell.
pub fn generate(spec: &SyntheticSceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gt = GaussianSet::new(Parametrization::Cartesian, 0);
    let mut init = PointCloud::default();
    let center = Vector3::from(spec.near_center);

    for _ in 0..spec.near_count {
        let offset = loop {
            let v = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            if v.norm() <= 1.0 {
                break v * spec.near_spread;
            }
        };
        let mu = center + offset;
        let scale = Vector3::from_fn(|_, _| spec.near_scale * rng.gen_range(0.6..1.6));
        let q = UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| rng.gen_range(-PI..PI)));
        let q = [q.w, q.i, q.j, q.k];
        let rgb = [0; 3].map(|_| rng.gen_range(0.1..0.95));
        let raw = encode_from_cartesian(mu, scale, q, Parametrization::Cartesian, None)?;
        gt.push(&raw, logit(rng.gen_range(0.8..0.95)), sh::rgb_to_dc(rgb), &[]);
        let noisy = mu + Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0) * spec.init_noise);
        init.positions.push(noisy.into());
        init.colors.push(rgb.map(|c| (c + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0)));
    }

    let cos_max = spec.far_cone_deg.to_radians().cos();
    for _ in 0..spec.far_count {
        let cos_t = rng.gen_range(cos_max..=1.0);
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let az = rng.gen_range(0.0..TAU);
        let dir = Vector3::new(sin_t * az.cos(), sin_t * az.sin(), cos_t);
        let dist = rng.gen_range(spec.far_distance[0]..=spec.far_distance[1]);
        let mu = dir * dist;
        let scale = Vector3::from_fn(|_, _| spec.far_scale * rng.gen_range(0.7..1.4));
        // Sky-like palette: blue that brightens towards the zenith.
        let t = (cos_t - cos_max) / (1.0 - cos_max).max(1e-12);
        let rgb = [
            (0.25 + 0.35 * t + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0),
            (0.45 + 0.3 * t + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0),
            (0.85 + rng.gen_range(-0.1f64..0.1)).clamp(0.0, 1.0),
        ];
        let raw = encode_from_cartesian(mu, scale, [1.0, 0.0, 0.0, 0.0], Parametrization::Cartesian, None)?;
        gt.push(&raw, logit(rng.gen_range(0.7..0.9)), sh::rgb_to_dc(rgb), &[]);
        if rng.gen_bool(spec.far_init_fraction) {
            let [lo, hi] = spec.far_init_depth_factor;
            let k = rng.gen_range(lo.ln()..=hi.ln()).exp();
            init.positions.push((mu * k).into());
            init.colors.push(rgb);
        }
    }

    let cfg = RenderConfig::default();
    let fx = spec.focal_factor * spec.width as f64;
    let near_only = gt.select(&(0..spec.near_count).collect::<Vec<_>>());
    let far_only = gt.select(&(spec.near_count..gt.len()).collect::<Vec<_>>());
    let mut cameras = Vec::with_capacity(spec.camera_count);
    let mut images = Vec::with_capacity(spec.camera_count);
    let mut depths = Vec::with_capacity(spec.camera_count);
    for k in 0..spec.camera_count {
        let a = TAU * k as f64 / spec.camera_count as f64;
        let eye = Vector3::new(a.cos(), a.sin(), 0.0) * spec.camera_radius;
        let cam = Camera::look_at(eye, center, -Vector3::y(), fx, fx, spec.width, spec.height)?;
        for (subset, label, count) in [(&near_only, "near", spec.near_count), (&far_only, "far", spec.far_count)] {
            if count > 0 && !render(subset, &cam, &cfg).alpha.iter().any(|&a| a > 0.5) {
                return Err(Error::InvalidArgument(format!(
                    "synthetic scene: camera {k} sees no {label} gaussian"
                )));
            }
        }
        let out = render(&gt, &cam, &cfg);
        images.push(out.radiance);
        depths.push(DepthMap::from_data(spec.width, spec.height, out.depth_expected)?);
        cameras.push(cam);
    }

    Ok(SyntheticScene {
        spec: spec.clone(),
        gt,
        cameras,
        images,
        depths,
        init_cloud: init,
    })
}

/// Writes the scene as a manifest with PNG images, PFM depths and a PLY
/// point cloud. Returns the manifest path.
pub fn write_scene(scene: &SyntheticScene, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_ply_points(&dir.join("points.ply"), &scene.init_cloud, io::PlyEncoding::BinaryLittleEndian)?;
    let mut views = Vec::with_capacity(scene.cameras.len());
    for (k, ((cam, img), depth)) in scene.cameras.iter().zip(&scene.images).zip(&scene.depths).enumerate() {
        let image_path = format!("view_{k:03}.png");
        let depth_path = format!("view_{k:03}.pfm");
        io::write_png(&dir.join(&image_path), img)?;
        io::write_pfm(&dir.join(&depth_path), depth, io::Endian::Little)?;
        views.push(ViewEntry::from_camera(cam, image_path, Some(depth_path)));
    }
    let manifest = SceneManifest {
        version: SceneManifest::VERSION,
        point_cloud_path: "points.ply".into(),
        views,
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}
