use serde::{Deserialize, Serialize};

use crate::scene::{ParamArrays, ParamGroup};
use crate::{Error, Result};

/// Per-group learning rates; `None` leaves the group untouched.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GroupRates {
    pub position: Option<f64>,
    pub weight: Option<f64>,
    pub log_scale: Option<f64>,
    pub rotation: Option<f64>,
    pub opacity: Option<f64>,
    pub sh_dc: Option<f64>,
    pub sh_rest: Option<f64>,
}

impl GroupRates {
    pub fn uniform(lr: f64) -> Self {
        Self {
            position: Some(lr),
            weight: Some(lr),
            log_scale: Some(lr),
            rotation: Some(lr),
            opacity: Some(lr),
            sh_dc: Some(lr),
            sh_rest: Some(lr),
        }
    }

    pub fn get(&self, g: ParamGroup) -> Option<f64> {
        match g {
            ParamGroup::Position => self.position,
            ParamGroup::Weight => self.weight,
            ParamGroup::LogScale => self.log_scale,
            ParamGroup::Rotation => self.rotation,
            ParamGroup::Opacity => self.opacity,
            ParamGroup::ShDc => self.sh_dc,
            ParamGroup::ShRest => self.sh_rest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

/// First and second moments laid out like the parameters, with one shared
/// step counter for bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ParamArrays,
    pub v: ParamArrays,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamArrays) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Appends zero moments for `n` new Gaussians.
    pub fn extend_zeros(&mut self, n: usize) {
        let z = ParamArrays::zeros(n, self.m.rest_stride);
        self.m.append(&z);
        self.v.append(&z);
    }

    pub fn retain_mask(&mut self, keep: &[bool]) {
        self.m.retain_mask(keep);
        self.v.retain_mask(keep);
    }

    pub fn reset_group(&mut self, g: ParamGroup) {
        self.m.group_mut(g).fill(0.0);
        self.v.group_mut(g).fill(0.0);
    }

    pub fn step(
        &mut self,
        params: &mut ParamArrays,
        grads: &ParamArrays,
        rates: &GroupRates,
        hyper: &AdamHyper,
    ) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.m) {
            return Err(Error::ShapeMismatch(format!(
                "adam: {} parameters, {} gradients, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - hyper.beta1.powi(t);
        let bc2 = 1.0 - hyper.beta2.powi(t);
        for g in ParamGroup::ALL {
            let Some(lr) = rates.get(g) else { continue };
            let m = self.m.group_mut(g);
            let v = self.v.group_mut(g);
            for (((p, &gr), m), v) in params.group_mut(g).iter_mut().zip(grads.group(g)).zip(m).zip(v) {
                *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * gr;
                *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * gr * gr;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrays(n: usize, value: f64) -> ParamArrays {
        let mut p = ParamArrays::zeros(n, 3);
        for g in ParamGroup::ALL {
            p.group_mut(g).fill(value);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = arrays(4, 0.7);
        let before = p.clone();
        let mut adam = AdamState::new(&p);
        let g = p.zeros_like();
        for _ in 0..5 {
            adam.step(&mut p, &g, &GroupRates::uniform(0.1), &AdamHyper::default())
                .unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Bias-corrected first step is lr * g / (|g| + eps).
        let mut p = arrays(2, 0.0);
        let mut adam = AdamState::new(&p);
        let g = arrays(2, -3.0);
        let rates = GroupRates {
            weight: None,
            ..GroupRates::uniform(0.01)
        };
        adam.step(&mut p, &g, &rates, &AdamHyper::default()).unwrap();
        for grp in ParamGroup::ALL {
            let expect = if grp == ParamGroup::Weight { 0.0 } else { 0.01 };
            for &v in p.group(grp) {
                assert!((v - expect).abs() < 1e-15, "{grp:?}: {v}");
            }
        }
    }

    #[test]
    fn matches_scalar_reference() {
        let hyper = AdamHyper::default();
        let mut p = arrays(1, 1.0);
        let mut adam = AdamState::new(&p);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=20 {
            let gr = 2.0 * x - 0.5;
            let g = arrays(1, gr);
            adam.step(&mut p, &g, &GroupRates::uniform(0.05), &hyper).unwrap();
            m = 0.9 * m + (1.0 - 0.9) * gr;
            v = 0.999 * v + (1.0 - 0.999) * gr * gr;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + 1e-15);
            assert_eq!(p.positions[0][0], x);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = arrays(2, 0.0);
        let mut adam = AdamState::new(&p);
        let g = arrays(3, 0.0);
        assert!(adam
            .step(&mut p, &g, &GroupRates::uniform(0.1), &AdamHyper::default())
            .is_err());
    }
}
