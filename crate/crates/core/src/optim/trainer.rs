use std::path::PathBuf;

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    densify_and_prune, photometric_loss, AdamHyper, AdamState, DensifyParams, DensifyReport,
    DensifyStats, ExpSchedule, GroupRates, TrainConfig,
};
use crate::geometry::Parametrization;
use crate::grad::backward;
use crate::image::Image;
use crate::render::{render, Camera, RenderConfig, RenderOutput};
use crate::scene::{add_skybox, init_from_points, logit, GaussianSet, InitConfig, ParamGroup, PointCloud};
use crate::{Error, Result};

/// Opacity ceiling applied by a reset.
const RESET_OPACITY: f64 = 0.01;

/// `1.1 *` the largest camera distance from the camera centroid. A single
/// camera (or coincident cameras) gives 1.
pub fn scene_extent(cameras: &[&Camera]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let centers: Vec<_> = cameras.iter().map(|c| c.center()).collect();
    let centroid = centers.iter().sum::<nalgebra::Vector3<f64>>() / centers.len() as f64;
    let radius = centers
        .iter()
        .map(|c| (c - centroid).norm())
        .fold(0.0, f64::max);
    if radius > 0.0 {
        1.1 * radius
    } else {
        1.0
    }
}

/// Everything needed to continue training bit-identically; the views
/// themselves are not included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub config: TrainConfig,
    pub set: GaussianSet,
    pub adam: AdamState,
    pub stats: DensifyStats,
    pub rng: ChaCha8Rng,
    /// Completed iterations.
    pub iteration: usize,
    /// Remaining views of the current epoch, consumed from the back.
    pub view_queue: Vec<usize>,
    pub train_views: Vec<usize>,
    pub extent: f64,
    /// Scene the views came from, if known.
    pub manifest_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// 1-based index of the iteration just completed.
    pub iteration: usize,
    pub view: usize,
    pub loss: f64,
    pub gaussian_count: usize,
    pub densify: Option<DensifyReport>,
    pub opacity_reset: bool,
}

pub struct Trainer {
    pub state: TrainerState,
    cameras: Vec<Camera>,
    images: Vec<Image>,
}

fn check_views(cameras: &[Camera], images: &[Image], train_views: &[usize]) -> Result<()> {
    if cameras.len() != images.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cameras but {} images",
            cameras.len(),
            images.len()
        )));
    }
    for (k, (c, im)) in cameras.iter().zip(images).enumerate() {
        if c.width != im.width || c.height != im.height {
            return Err(Error::ShapeMismatch(format!(
                "view {k}: camera is {}x{}, image is {}x{}",
                c.width, c.height, im.width, im.height
            )));
        }
    }
    if train_views.is_empty() {
        return Err(Error::InvalidArgument("no training views".into()));
    }
    if let Some(&bad) = train_views.iter().find(|&&v| v >= cameras.len()) {
        return Err(Error::InvalidArgument(format!(
            "training view {bad} out of range ({} views)",
            cameras.len()
        )));
    }
    Ok(())
}

impl Trainer {
    pub fn new(
        config: TrainConfig,
        cloud: &PointCloud,
        cameras: Vec<Camera>,
        images: Vec<Image>,
        train_views: Vec<usize>,
    ) -> Result<Self> {
        config.validate()?;
        check_views(&cameras, &images, &train_views)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let init = InitConfig {
            sh_degree: config.sh_degree,
            w_init: config.w_init,
        };
        let mut set = init_from_points(cloud, config.parametrization, &init, &mut rng)?;
        if let Some(sky) = &config.skybox {
            add_skybox(&mut set, sky, &mut rng)?;
        }
        let train_cams: Vec<&Camera> = train_views.iter().map(|&v| &cameras[v]).collect();
        let extent = scene_extent(&train_cams);
        let state = TrainerState {
            adam: AdamState::new(&set.params),
            stats: DensifyStats::new(set.len()),
            set,
            config,
            rng,
            iteration: 0,
            view_queue: Vec::new(),
            train_views,
            extent,
            manifest_path: None,
        };
        Ok(Self {
            state,
            cameras,
            images,
        })
    }

    /// Continues from a saved state with the same views it was trained on.
    pub fn resume(state: TrainerState, cameras: Vec<Camera>, images: Vec<Image>) -> Result<Self> {
        state.config.validate()?;
        check_views(&cameras, &images, &state.train_views)?;
        state.set.validate()?;
        if state.adam.len() != state.set.len() || state.stats.len() != state.set.len() {
            return Err(Error::ShapeMismatch("trainer state arrays disagree in length".into()));
        }
        Ok(Self {
            state,
            cameras,
            images,
        })
    }

    pub fn set(&self) -> &GaussianSet {
        &self.state.set
    }

    pub fn iteration(&self) -> usize {
        self.state.iteration
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.state.config.iterations
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn render_config(&self) -> RenderConfig {
        RenderConfig {
            background: self.state.config.background,
            ..RenderConfig::default()
        }
    }

    pub fn render_view(&self, view: usize) -> Result<RenderOutput> {
        let cam = self.cameras.get(view).ok_or_else(|| {
            Error::InvalidArgument(format!("view {view} out of range ({} views)", self.cameras.len()))
        })?;
        Ok(render(&self.state.set, cam, &self.render_config()))
    }

    fn rates(&self, step: usize) -> GroupRates {
        let c = &self.state.config;
        let pos = ExpSchedule::new(c.position_lr_init, c.position_lr_final, c.position_lr_max_steps);
        let rho = ExpSchedule::new(c.rho_lr_init, c.rho_lr_final, c.position_lr_max_steps);
        let weight = match c.parametrization {
            Parametrization::Cartesian => None,
            _ => Some(rho.at(step) * c.lr_w_multiplier),
        };
        GroupRates {
            position: Some(pos.at(step) * self.state.extent),
            weight,
            log_scale: Some(c.lr_scale),
            rotation: Some(c.lr_rotation),
            opacity: Some(c.lr_opacity),
            sh_dc: Some(c.lr_sh),
            sh_rest: Some(c.lr_sh / 20.0),
        }
    }

    fn next_view(&mut self) -> usize {
        let st = &mut self.state;
        if st.view_queue.is_empty() {
            st.view_queue = st.train_views.clone();
            st.view_queue.shuffle(&mut st.rng);
        }
        st.view_queue.pop().expect("training views are non-empty")
    }

    pub fn step(&mut self) -> Result<StepReport> {
        if self.is_done() {
            return Err(Error::InvalidArgument(format!(
                "training already finished after {} iterations",
                self.state.iteration
            )));
        }
        let it = self.state.iteration;
        let k = it + 1;
        {
            let st = &mut self.state;
            st.set.active_sh_degree = st.set.sh_degree.min(it / st.config.sh_unlock_interval);
        }
        let view = self.next_view();
        let mut rcfg = self.render_config();
        if self.state.config.random_background {
            let rng = &mut self.state.rng;
            rcfg.background = [rng.gen(), rng.gen(), rng.gen()];
        }
        let cam = &self.cameras[view];
        let out = render(&self.state.set, cam, &rcfg);
        let (loss, d_image) =
            photometric_loss(&out.radiance, &self.images[view], self.state.config.lambda_dssim)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: k, view });
        }
        let grads = backward(&self.state.set, cam, &out, &d_image)?;
        if !grads.all_finite() {
            return Err(Error::NonFiniteLoss { iteration: k, view });
        }
        let cfg = self.state.config.clone();
        let densifying = k < cfg.densify_stop;
        if densifying {
            self.state.stats.accumulate(&out.radii, &grads.screen_grad_norm)?;
        }
        let rates = self.rates(it);
        let hyper = AdamHyper {
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        };
        let st = &mut self.state;
        st.adam.step(&mut st.set.params, &grads.params, &rates, &hyper)?;

        let mut densify = None;
        let mut opacity_reset = false;
        if densifying {
            if k > cfg.densify_start && k % cfg.densify_interval == 0 {
                let after_reset = k > cfg.opacity_reset_interval;
                let params = DensifyParams {
                    grad_threshold: cfg.densify_grad_threshold,
                    split_scale_fraction: cfg.split_scale_fraction,
                    extent: st.extent,
                    prune_opacity: cfg.prune_opacity,
                    prune_screen_px: after_reset.then_some(cfg.prune_screen_px),
                    prune_world_fraction: cfg.world_prune().then_some(cfg.prune_world_extent_fraction),
                };
                let report =
                    densify_and_prune(&mut st.set, &mut st.adam, &mut st.stats, &params, &mut st.rng)?;
                debug!("iteration {k}: {report:?}");
                densify = Some(report);
            }
            if k % cfg.opacity_reset_interval == 0 {
                for o in &mut st.set.params.opacities {
                    *o = o.min(logit(RESET_OPACITY));
                }
                st.adam.reset_group(ParamGroup::Opacity);
                opacity_reset = true;
            }
        }
        st.iteration = k;
        Ok(StepReport {
            iteration: k,
            view,
            loss,
            gaussian_count: st.set.len(),
            densify,
            opacity_reset,
        })
    }

    /// Runs to completion, calling `on_step` after every iteration.
    pub fn run(&mut self, mut on_step: impl FnMut(&Trainer, &StepReport) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let report = self.step()?;
            on_step(self, &report)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::psnr;
    use nalgebra::Vector3;

    fn camera(w: usize, h: usize, eye: Vector3<f64>) -> Camera {
        Camera::look_at(
            eye,
            Vector3::new(0.0, 0.0, 4.0),
            Vector3::new(0.0, -1.0, 0.0),
            1.2 * w as f64,
            1.2 * h as f64,
            w,
            h,
        )
        .unwrap()
    }

    fn small_config(p: Parametrization, iterations: usize) -> TrainConfig {
        TrainConfig {
            parametrization: p,
            sh_degree: 0,
            densify_stop: 0,
            ..TrainConfig::desk(iterations)
        }
    }

    #[test]
    fn extent_of_camera_ring() {
        let cams: Vec<Camera> = (0..4)
            .map(|k| {
                let a = k as f64 * std::f64::consts::FRAC_PI_2;
                camera(8, 8, Vector3::new(2.0 * a.cos(), 2.0 * a.sin(), 0.0))
            })
            .collect();
        let refs: Vec<&Camera> = cams.iter().collect();
        assert!((scene_extent(&refs) - 2.2).abs() < 1e-9);
        assert_eq!(scene_extent(&refs[..1]), 1.0);
    }

    #[test]
    fn single_pixel_overfit() {
        // One Gaussian, one pixel: the rendered color converges to the target.
        // Color moves slower than opacity so no channel runs into the clamp,
        // where its gradient vanishes.
        for p in Parametrization::ALL {
            // Principal point on the pixel centre, so the Gaussian peaks there.
            let cam = Camera::new(1.2, 1.2, 0.0, 0.0, 1, 1, nalgebra::Matrix3::identity(), Vector3::zeros())
                .unwrap();
            let target = Image::filled(1, 1, [0.8, 0.3, 0.55]);
            let cloud = PointCloud {
                positions: vec![[0.0, 0.0, 4.0]],
                colors: vec![[0.5, 0.5, 0.5]],
            };
            let cfg = TrainConfig {
                lambda_dssim: 0.0,
                lr_opacity: 0.05,
                lr_sh: 0.01,
                ..small_config(p, 200)
            };
            let mut t = Trainer::new(cfg, &cloud, vec![cam], vec![target.clone()], vec![0]).unwrap();
            t.run(|_, _| Ok(())).unwrap();
            let out = t.render_view(0).unwrap();
            for c in 0..3 {
                let err = (out.radiance.data[c] - target.data[c]).abs();
                assert!(err < 1e-2, "{p}: channel {c} error {err}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let cams: Vec<Camera> = (0..3)
            .map(|k| camera(16, 16, Vector3::new(0.3 * k as f64 - 0.3, 0.1, 0.0)))
            .collect();
        let images: Vec<Image> = (0..3)
            .map(|k| Image::filled(16, 16, [0.2 + 0.1 * k as f64, 0.5, 0.3]))
            .collect();
        let cloud = PointCloud {
            positions: vec![[0.0, 0.0, 4.0], [0.3, -0.2, 4.5], [-0.4, 0.1, 3.5]],
            colors: vec![[0.4; 3], [0.6; 3], [0.2; 3]],
        };
        let cfg = TrainConfig {
            densify_start: 5,
            densify_interval: 10,
            densify_stop: 40,
            densify_grad_threshold: 1e-6,
            opacity_reset_interval: 30,
            ..small_config(Parametrization::Homogeneous, 60)
        };
        let make = || Trainer::new(cfg.clone(), &cloud, cams.clone(), images.clone(), vec![0, 1, 2]).unwrap();
        let mut a = make();
        let mut b = make();
        for _ in 0..25 {
            a.step().unwrap();
            b.step().unwrap();
        }
        let snapshot = a.state.clone();
        a.run(|_, _| Ok(())).unwrap();
        b.run(|_, _| Ok(())).unwrap();
        assert_eq!(a.state, b.state);
        let mut c = Trainer::resume(snapshot, cams.clone(), images.clone()).unwrap();
        c.run(|_, _| Ok(())).unwrap();
        assert_eq!(c.state, a.state);
        assert!(a.step().is_err());
    }

    #[test]
    fn densification_changes_count_consistently() {
        let cams: Vec<Camera> = (0..2)
            .map(|k| camera(24, 24, Vector3::new(0.2 * k as f64, 0.0, 0.0)))
            .collect();
        let mut images = vec![Image::new(24, 24); 2];
        for im in &mut images {
            for y in 8..16 {
                for x in 4..20 {
                    im.set_pixel(x, y, [0.9, 0.2, 0.1]);
                }
            }
        }
        let cloud = PointCloud {
            positions: vec![[0.0, 0.0, 4.0], [0.05, 0.0, 4.0]],
            colors: vec![[0.5; 3]; 2],
        };
        let cfg = TrainConfig {
            densify_start: 10,
            densify_interval: 10,
            densify_stop: 100,
            densify_grad_threshold: 1e-5,
            world_prune_enabled: Some(false),
            ..small_config(Parametrization::Cartesian, 100)
        };
        let mut t = Trainer::new(cfg, &cloud, cams, images, vec![0, 1]).unwrap();
        let mut count = t.set().len();
        let mut passes = 0;
        t.run(|_, r| {
            if let Some(d) = r.densify {
                assert_eq!(d.before, count);
                assert_eq!(d.after, d.before + d.cloned + d.split - d.pruned());
                passes += 1;
            }
            count = r.gaussian_count;
            Ok(())
        })
        .unwrap();
        // Passes at iterations 20, 30, ..., 90.
        assert_eq!(passes, 8);
        assert!(t.set().len() > 2);
    }

    #[test]
    fn overfits_a_rendered_target() {
        // Targets rendered from a perturbed copy of the init are recovered.
        let cams: Vec<Camera> = (0..4)
            .map(|k| camera(24, 24, Vector3::new(0.25 * k as f64 - 0.4, 0.1 * k as f64, 0.0)))
            .collect();
        let cloud = PointCloud {
            positions: vec![[0.0, 0.0, 4.0], [0.3, -0.2, 4.4], [-0.3, 0.25, 3.8], [0.1, 0.3, 4.2]],
            colors: vec![[0.9, 0.1, 0.1], [0.1, 0.8, 0.2], [0.2, 0.3, 0.9], [0.8, 0.8, 0.2]],
        };
        let cfg = TrainConfig {
            lr_opacity: 0.05,
            ..small_config(Parametrization::Homogeneous, 1000)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut gt_set = init_from_points(
            &cloud,
            Parametrization::Cartesian,
            &InitConfig {
                sh_degree: 0,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        for o in &mut gt_set.params.opacities {
            *o = logit(0.8);
        }
        let rcfg = RenderConfig::default();
        let images: Vec<Image> = cams.iter().map(|c| render(&gt_set, c, &rcfg).radiance).collect();
        let mut t = Trainer::new(cfg, &cloud, cams.clone(), images.clone(), vec![0, 1, 2, 3]).unwrap();
        let initial: f64 = (0..4)
            .map(|v| photometric_loss(&t.render_view(v).unwrap().radiance, &images[v], 0.0).unwrap().0)
            .sum();
        t.run(|_, _| Ok(())).unwrap();
        let fin: f64 = (0..4)
            .map(|v| photometric_loss(&t.render_view(v).unwrap().radiance, &images[v], 0.0).unwrap().0)
            .sum();
        assert!(fin < 0.05 * initial, "L1 {initial} -> {fin}");
        let p = psnr(&t.render_view(0).unwrap().radiance, &images[0]).unwrap();
        assert!(p > 30.0, "psnr {p}");
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let cam = camera(4, 4, Vector3::zeros());
        let cloud = PointCloud {
            positions: vec![[0.0, 0.0, 4.0]],
            colors: vec![[0.5; 3]],
        };
        let cfg = small_config(Parametrization::Cartesian, 10);
        assert!(Trainer::new(cfg.clone(), &cloud, vec![cam.clone()], vec![Image::new(5, 4)], vec![0]).is_err());
        assert!(Trainer::new(cfg.clone(), &cloud, vec![cam.clone()], vec![Image::new(4, 4)], vec![1]).is_err());
        assert!(Trainer::new(cfg, &cloud, vec![cam], vec![Image::new(4, 4)], vec![]).is_err());
    }
}
