use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::AdamState;
use crate::geometry::{decode_scale, encode_from_cartesian, Parametrization, RawGeometry};
use crate::scene::{GaussianSet, ParamArrays};
use crate::{Error, Result};

/// Children per split Gaussian.
const SPLIT_CHILDREN: usize = 2;
/// Child scale divisor: `0.8 * SPLIT_CHILDREN`.
const SPLIT_SCALE_DIVISOR: f64 = 0.8 * SPLIT_CHILDREN as f64;

/// View-space gradient statistics accumulated between densification passes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DensifyStats {
    pub grad_accum: Vec<f64>,
    pub denom: Vec<u32>,
    /// Largest screen radius (px) seen since the last pass.
    pub max_radii: Vec<f64>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_accum: vec![0.0; n],
            denom: vec![0; n],
            max_radii: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.denom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.denom.is_empty()
    }

    /// Records one rendered view. Only Gaussians with a positive radius count.
    pub fn accumulate(&mut self, radii: &[f64], screen_grad_norm: &[f64]) -> Result<()> {
        if radii.len() != self.len() || screen_grad_norm.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "densify stats hold {} gaussians, got {} radii and {} gradients",
                self.len(),
                radii.len(),
                screen_grad_norm.len()
            )));
        }
        for i in 0..self.len() {
            if radii[i] > 0.0 {
                self.max_radii[i] = self.max_radii[i].max(radii[i]);
                self.grad_accum[i] += screen_grad_norm[i];
                self.denom[i] += 1;
            }
        }
        Ok(())
    }

    /// Mean accumulated gradient; zero for never-seen Gaussians.
    pub fn mean_grad(&self, i: usize) -> f64 {
        if self.denom[i] == 0 {
            0.0
        } else {
            self.grad_accum[i] / self.denom[i] as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensifyParams {
    pub grad_threshold: f64,
    /// Clone at or below, split above `split_scale_fraction * extent`.
    pub split_scale_fraction: f64,
    pub extent: f64,
    pub prune_opacity: f64,
    /// Prune Gaussians whose screen radius exceeded this (px).
    pub prune_screen_px: Option<f64>,
    /// Prune Gaussians whose largest world scale exceeds this fraction of the extent.
    pub prune_world_fraction: Option<f64>,
}

/// Outcome of one pass. Each pruned Gaussian is counted under the first
/// matching rule: opacity, then screen size, then world size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensifyReport {
    pub before: usize,
    pub cloned: usize,
    pub split: usize,
    pub pruned_opacity: usize,
    pub pruned_screen: usize,
    pub pruned_world: usize,
    pub after: usize,
}

impl DensifyReport {
    pub fn pruned(&self) -> usize {
        self.pruned_opacity + self.pruned_screen + self.pruned_world
    }
}

fn max_component(v: &Vector3<f64>) -> f64 {
    v.x.max(v.y).max(v.z)
}

/// Clones small high-gradient Gaussians, splits large ones, then prunes.
/// New Gaussians start with zero optimizer moments; the statistics are reset.
pub fn densify_and_prune<R: Rng>(
    set: &mut GaussianSet,
    adam: &mut AdamState,
    stats: &mut DensifyStats,
    params: &DensifyParams,
    rng: &mut R,
) -> Result<DensifyReport> {
    let n = set.len();
    if stats.len() != n || adam.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "densify: {n} gaussians, {} stats, {} optimizer entries",
            stats.len(),
            adam.len()
        )));
    }
    let size_limit = params.split_scale_fraction * params.extent;
    let mut clone_idx = Vec::new();
    let mut split_idx = Vec::new();
    let mut max_scale = Vec::with_capacity(n);
    for i in 0..n {
        let s = max_component(&set.decode_scale(i)?);
        max_scale.push(s);
        if stats.mean_grad(i) > params.grad_threshold {
            if s <= size_limit {
                clone_idx.push(i);
            } else {
                split_idx.push(i);
            }
        }
    }

    let clones = set.params.select(&clone_idx);
    let children = split_children(set, &split_idx, rng)?;
    let added = clones.len() + children.len();
    let mut new_max_scale = Vec::with_capacity(added);
    new_max_scale.extend(clone_idx.iter().map(|&i| max_scale[i]));
    for k in 0..children.len() {
        let raw = RawGeometry {
            position: children.positions[k],
            weight: children.weights[k],
            log_scale: children.log_scales[k],
            rotation: children.rotations[k],
        };
        new_max_scale.push(max_component(&decode_scale(&raw, set.parametrization)?));
    }
    set.params.append(&clones);
    set.params.append(&children);
    adam.extend_zeros(added);
    max_scale.extend(new_max_scale);

    let total = set.len();
    let mut keep = vec![true; total];
    for &i in &split_idx {
        keep[i] = false;
    }
    let mut report = DensifyReport {
        before: n,
        cloned: clone_idx.len(),
        split: split_idx.len(),
        ..Default::default()
    };
    for i in 0..total {
        if !keep[i] {
            continue;
        }
        // Gaussians added in this pass have not been rendered yet.
        let radius = if i < n { stats.max_radii[i] } else { 0.0 };
        if set.opacity(i) < params.prune_opacity {
            report.pruned_opacity += 1;
        } else if params.prune_screen_px.is_some_and(|px| radius > px) {
            report.pruned_screen += 1;
        } else if params
            .prune_world_fraction
            .is_some_and(|f| max_scale[i] > f * params.extent)
        {
            report.pruned_world += 1;
        } else {
            continue;
        }
        keep[i] = false;
    }
    set.params.retain_mask(&keep);
    adam.retain_mask(&keep);
    report.after = set.len();
    *stats = DensifyStats::new(report.after);
    Ok(report)
}

/// Samples `SPLIT_CHILDREN` children per parent from the parent's own
/// distribution, with scales shrunk by `SPLIT_SCALE_DIVISOR`. Homogeneous
/// children keep the parent's weight.
fn split_children<R: Rng>(set: &GaussianSet, parents: &[usize], rng: &mut R) -> Result<ParamArrays> {
    let mut staging = GaussianSet::new(set.parametrization, set.sh_degree);
    for &i in parents {
        let d = set.decode(i)?;
        let rot = set.params.rotations[i];
        let hint = (set.parametrization == Parametrization::Homogeneous).then(|| set.params.weights[i].exp());
        let child_scale = d.scale / SPLIT_SCALE_DIVISOR;
        for _ in 0..SPLIT_CHILDREN {
            let z = Vector3::from_fn(|k, _| {
                let e: f64 = StandardNormal.sample(rng);
                e * d.scale[k]
            });
            let mu = d.mean + d.rotation * z;
            let raw = encode_from_cartesian(mu, child_scale, rot, set.parametrization, hint)?;
            staging.push(
                &raw,
                set.params.opacities[i],
                set.params.sh_dc[i],
                set.params.sh_rest_of(i),
            );
        }
    }
    Ok(staging.params)
}
