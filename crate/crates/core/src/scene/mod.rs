//! Structure-of-arrays Gaussian storage and scene initialization.

mod init;
pub mod sh;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{self, Parametrization, RawGeometry};
use crate::{Error, Result};

pub use init::{add_skybox, init_from_points, InitConfig, SkyboxConfig, WInit};
pub use sh::eval_sh_color;

/// The independently optimized parameter arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    Weight,
    LogScale,
    Rotation,
    Opacity,
    ShDc,
    ShRest,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 7] = [
        ParamGroup::Position,
        ParamGroup::Weight,
        ParamGroup::LogScale,
        ParamGroup::Rotation,
        ParamGroup::Opacity,
        ParamGroup::ShDc,
        ParamGroup::ShRest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::Weight => "weight",
            ParamGroup::LogScale => "log_scale",
            ParamGroup::Rotation => "rotation",
            ParamGroup::Opacity => "opacity",
            ParamGroup::ShDc => "sh_dc",
            ParamGroup::ShRest => "sh_rest",
        }
    }
}

/// One value per raw parameter of every Gaussian. Used for the parameters
/// themselves, their gradients and the optimizer moments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamArrays {
    pub positions: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacities: Vec<f64>,
    pub sh_dc: Vec<[f64; 3]>,
    /// `len * rest_stride` values; per Gaussian, coefficient-major with RGB innermost.
    pub sh_rest: Vec<f64>,
    pub rest_stride: usize,
}

impl ParamArrays {
    pub fn zeros(n: usize, rest_stride: usize) -> Self {
        Self {
            positions: vec![[0.0; 3]; n],
            weights: vec![0.0; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacities: vec![0.0; n],
            sh_dc: vec![[0.0; 3]; n],
            sh_rest: vec![0.0; n * rest_stride],
            rest_stride,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.len(), self.rest_stride)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn check_consistent(&self) -> Result<()> {
        let n = self.len();
        let ok = self.weights.len() == n
            && self.log_scales.len() == n
            && self.rotations.len() == n
            && self.opacities.len() == n
            && self.sh_dc.len() == n
            && self.sh_rest.len() == n * self.rest_stride;
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "inconsistent parameter array lengths for {n} gaussians"
            )))
        }
    }

    pub fn same_shape(&self, other: &ParamArrays) -> bool {
        self.len() == other.len() && self.rest_stride == other.rest_stride
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        match g {
            ParamGroup::Position => self.positions.as_flattened(),
            ParamGroup::Weight => &self.weights,
            ParamGroup::LogScale => self.log_scales.as_flattened(),
            ParamGroup::Rotation => self.rotations.as_flattened(),
            ParamGroup::Opacity => &self.opacities,
            ParamGroup::ShDc => self.sh_dc.as_flattened(),
            ParamGroup::ShRest => &self.sh_rest,
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        match g {
            ParamGroup::Position => self.positions.as_flattened_mut(),
            ParamGroup::Weight => &mut self.weights,
            ParamGroup::LogScale => self.log_scales.as_flattened_mut(),
            ParamGroup::Rotation => self.rotations.as_flattened_mut(),
            ParamGroup::Opacity => &mut self.opacities,
            ParamGroup::ShDc => self.sh_dc.as_flattened_mut(),
            ParamGroup::ShRest => &mut self.sh_rest,
        }
    }

    /// Values per Gaussian in a group.
    pub fn group_width(&self, g: ParamGroup) -> usize {
        match g {
            ParamGroup::Position | ParamGroup::LogScale | ParamGroup::ShDc => 3,
            ParamGroup::Weight | ParamGroup::Opacity => 1,
            ParamGroup::Rotation => 4,
            ParamGroup::ShRest => self.rest_stride,
        }
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        ParamGroup::ALL.iter().map(|&g| self.group(g).len()).sum()
    }

    pub fn sh_rest_of(&self, i: usize) -> &[f64] {
        &self.sh_rest[i * self.rest_stride..(i + 1) * self.rest_stride]
    }

    /// New arrays holding the given Gaussians in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let s = self.rest_stride;
        let mut sh_rest = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            sh_rest.extend_from_slice(&self.sh_rest[i * s..(i + 1) * s]);
        }
        Self {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
            log_scales: indices.iter().map(|&i| self.log_scales[i]).collect(),
            rotations: indices.iter().map(|&i| self.rotations[i]).collect(),
            opacities: indices.iter().map(|&i| self.opacities[i]).collect(),
            sh_dc: indices.iter().map(|&i| self.sh_dc[i]).collect(),
            sh_rest,
            rest_stride: s,
        }
    }

    pub fn append(&mut self, other: &ParamArrays) {
        assert_eq!(self.rest_stride, other.rest_stride, "SH layout mismatch");
        self.positions.extend_from_slice(&other.positions);
        self.weights.extend_from_slice(&other.weights);
        self.log_scales.extend_from_slice(&other.log_scales);
        self.rotations.extend_from_slice(&other.rotations);
        self.opacities.extend_from_slice(&other.opacities);
        self.sh_dc.extend_from_slice(&other.sh_dc);
        self.sh_rest.extend_from_slice(&other.sh_rest);
    }

    /// Keeps Gaussians whose mask entry is `true`.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        *self = self.select(&idx);
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &ParamArrays, scale: f64) {
        for g in ParamGroup::ALL {
            for (a, b) in self.group_mut(g).iter_mut().zip(other.group(g)) {
                *a += scale * b;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        ParamGroup::ALL
            .iter()
            .all(|&g| self.group(g).iter().all(|v| v.is_finite()))
    }
}

/// Decoded world-space attributes of one Gaussian.
#[derive(Clone, Debug)]
pub struct DecodedGaussian {
    pub mean: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub covariance: Matrix3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSet {
    pub parametrization: Parametrization,
    pub params: ParamArrays,
    /// Maximum SH degree stored.
    pub sh_degree: usize,
    /// SH degree used for evaluation, `<= sh_degree`.
    pub active_sh_degree: usize,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl GaussianSet {
    pub fn new(parametrization: Parametrization, sh_degree: usize) -> Self {
        assert!(sh_degree <= sh::MAX_DEGREE, "SH degree above {}", sh::MAX_DEGREE);
        Self {
            parametrization,
            params: ParamArrays::zeros(0, 3 * (sh::coeff_count(sh_degree) - 1)),
            sh_degree,
            active_sh_degree: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn rest_stride(&self) -> usize {
        self.params.rest_stride
    }

    pub fn raw_geometry(&self, i: usize) -> RawGeometry {
        RawGeometry {
            position: self.params.positions[i],
            weight: self.params.weights[i],
            log_scale: self.params.log_scales[i],
            rotation: self.params.rotations[i],
        }
    }

    pub fn set_raw_geometry(&mut self, i: usize, raw: &RawGeometry) {
        self.params.positions[i] = raw.position;
        self.params.weights[i] = raw.weight;
        self.params.log_scales[i] = raw.log_scale;
        self.params.rotations[i] = raw.rotation;
    }

    /// Appends one Gaussian. `sh_rest` may be shorter than the stride; the
    /// remainder is zero-filled.
    pub fn push(&mut self, raw: &RawGeometry, opacity_raw: f64, sh_dc: [f64; 3], sh_rest: &[f64]) {
        let s = self.rest_stride();
        assert!(sh_rest.len() <= s, "too many SH coefficients");
        let p = &mut self.params;
        p.positions.push(raw.position);
        p.weights.push(raw.weight);
        p.log_scales.push(raw.log_scale);
        p.rotations.push(raw.rotation);
        p.opacities.push(opacity_raw);
        p.sh_dc.push(sh_dc);
        p.sh_rest.extend_from_slice(sh_rest);
        p.sh_rest.extend(std::iter::repeat(0.0).take(s - sh_rest.len()));
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.params.opacities[i])
    }

    pub fn decode_mean(&self, i: usize) -> Result<Vector3<f64>> {
        geometry::decode_position(&self.raw_geometry(i), self.parametrization)
    }

    pub fn decode_scale(&self, i: usize) -> Result<Vector3<f64>> {
        geometry::decode_scale(&self.raw_geometry(i), self.parametrization)
    }

    pub fn decode(&self, i: usize) -> Result<DecodedGaussian> {
        let raw = self.raw_geometry(i);
        let mean = geometry::decode_position(&raw, self.parametrization)?;
        let scale = geometry::decode_scale(&raw, self.parametrization)?;
        let rotation = geometry::rotation_matrix(raw.rotation)?;
        let covariance = geometry::covariance_from(&rotation, &scale);
        Ok(DecodedGaussian {
            mean,
            scale,
            rotation,
            covariance,
        })
    }

    /// All SH coefficients of one Gaussian, DC first.
    pub fn sh_coeffs(&self, i: usize) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(1 + self.rest_stride() / 3);
        out.push(self.params.sh_dc[i]);
        out.extend(
            self.params
                .sh_rest_of(i)
                .chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]]),
        );
        out
    }

    /// Homogeneous weight `w = exp(rho)`; `None` for other parametrizations.
    pub fn homogeneous_weight(&self, i: usize) -> Option<f64> {
        (self.parametrization == Parametrization::Homogeneous)
            .then(|| self.params.weights[i].exp())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            params: self.params.select(indices),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Self {
        Self {
            parametrization: self.parametrization,
            params: ParamArrays::zeros(0, self.rest_stride()),
            sh_degree: self.sh_degree,
            active_sh_degree: self.active_sh_degree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.check_consistent()?;
        if self.active_sh_degree > self.sh_degree {
            return Err(Error::InvalidArgument(format!(
                "active SH degree {} exceeds maximum {}",
                self.active_sh_degree, self.sh_degree
            )));
        }
        if self.rest_stride() != 3 * (sh::coeff_count(self.sh_degree) - 1) {
            return Err(Error::ShapeMismatch("SH stride does not match degree".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<[f64; 3]>,
    /// RGB in `[0, 1]`.
    pub colors: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}
