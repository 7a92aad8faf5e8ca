use serde::{Deserialize, Serialize};

use crate::geometry::Parametrization;
use crate::scene::{sh, SkyboxConfig, WInit};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub parametrization: Parametrization,
    pub iterations: usize,
    pub seed: u64,

    /// Position learning rate at step 0, times the scene extent.
    pub position_lr_init: f64,
    pub position_lr_final: f64,
    pub position_lr_max_steps: usize,
    /// Learning rate of the raw weight (`ln w` or `ln w'`), decayed over
    /// `position_lr_max_steps` like the position rate.
    pub rho_lr_init: f64,
    pub rho_lr_final: f64,
    pub lr_w_multiplier: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub lr_opacity: f64,
    /// DC rate; higher-order SH use a twentieth of it.
    pub lr_sh: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,

    pub lambda_dssim: f64,

    pub densify_start: usize,
    pub densify_stop: usize,
    pub densify_interval: usize,
    pub densify_grad_threshold: f64,
    /// Clone below / split above this fraction of the extent.
    pub split_scale_fraction: f64,
    pub opacity_reset_interval: usize,
    pub prune_opacity: f64,
    pub prune_screen_px: f64,
    pub prune_world_extent_fraction: f64,
    /// `None` enables world-space pruning for Cartesian only.
    pub world_prune_enabled: Option<bool>,

    pub sh_degree: usize,
    pub sh_unlock_interval: usize,
    pub w_init: WInit,
    pub skybox: Option<SkyboxConfig>,
    pub background: [f64; 3],
    pub random_background: bool,

    /// Zero writes only the final checkpoint.
    pub checkpoint_interval: usize,
    pub telemetry_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            parametrization: Parametrization::Homogeneous,
            iterations: 50_000,
            seed: 0,
            position_lr_init: 1.6e-4,
            position_lr_final: 1.6e-6,
            position_lr_max_steps: 30_000,
            rho_lr_init: 2e-4,
            rho_lr_final: 2e-6,
            lr_w_multiplier: 1.0,
            lr_scale: 5e-3,
            lr_rotation: 1e-3,
            lr_opacity: 5e-2,
            lr_sh: 2.5e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-15,
            lambda_dssim: 0.2,
            densify_start: 500,
            densify_stop: 15_000,
            densify_interval: 100,
            densify_grad_threshold: 2e-4,
            split_scale_fraction: 0.01,
            opacity_reset_interval: 3000,
            prune_opacity: 5e-3,
            prune_screen_px: 20.0,
            prune_world_extent_fraction: 0.1,
            world_prune_enabled: None,
            sh_degree: 3,
            sh_unlock_interval: 1000,
            w_init: WInit::InverseDistance,
            skybox: None,
            background: [0.0; 3],
            random_background: false,
            checkpoint_interval: 0,
            telemetry_interval: 1000,
        }
    }
}

impl TrainConfig {
    /// Schedule scaled for a few thousand iterations on small images.
    pub fn desk(iterations: usize) -> Self {
        Self {
            iterations,
            position_lr_max_steps: iterations,
            densify_start: 300,
            densify_stop: iterations * 2 / 3,
            opacity_reset_interval: 1000,
            sh_degree: 1,
            sh_unlock_interval: 500,
            telemetry_interval: 500,
            ..Self::default()
        }
    }

    pub fn world_prune(&self) -> bool {
        self.world_prune_enabled
            .unwrap_or(self.parametrization == Parametrization::Cartesian)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("position_lr_init", self.position_lr_init),
            ("position_lr_final", self.position_lr_final),
            ("rho_lr_init", self.rho_lr_init),
            ("rho_lr_final", self.rho_lr_final),
            ("lr_w_multiplier", self.lr_w_multiplier),
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
            ("lr_opacity", self.lr_opacity),
            ("lr_sh", self.lr_sh),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        let intervals = [
            ("iterations", self.iterations),
            ("position_lr_max_steps", self.position_lr_max_steps),
            ("densify_interval", self.densify_interval),
            ("opacity_reset_interval", self.opacity_reset_interval),
            ("sh_unlock_interval", self.sh_unlock_interval),
            ("telemetry_interval", self.telemetry_interval),
        ];
        for (name, v) in intervals {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(Error::InvalidArgument(format!(
                "lambda_dssim must lie in [0, 1], got {}",
                self.lambda_dssim
            )));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.sh_degree > sh::MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "sh_degree must be at most {}, got {}",
                sh::MAX_DEGREE,
                self.sh_degree
            )));
        }
        if let WInit::Constant(w) = self.w_init {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("w_init must be positive, got {w}")));
            }
        }
        Ok(())
    }
}
