use rayon::prelude::*;

use super::GradientBuffer;
use crate::render::{render, Camera, RenderConfig, RenderOutput};
use crate::scene::{GaussianSet, ParamGroup};

/// Central difference of an arbitrary function of the set with respect to
/// one raw scalar.
pub fn finite_diff_scalar<F>(set: &GaussianSet, loss: &F, group: ParamGroup, index: usize, h: f64) -> f64
where
    F: Fn(&GaussianSet) -> f64,
{
    let mut plus = set.clone();
    plus.params.group_mut(group)[index] += h;
    let mut minus = set.clone();
    minus.params.group_mut(group)[index] -= h;
    (loss(&plus) - loss(&minus)) / (2.0 * h)
}

/// Central differences of `loss(set)` over every raw parameter.
pub fn finite_diff_set_gradients<F>(set: &GaussianSet, loss: F, h: f64) -> GradientBuffer
where
    F: Fn(&GaussianSet) -> f64 + Sync,
{
    let mut out = GradientBuffer::zeros_for(set);
    for group in ParamGroup::ALL {
        let n = set.params.group(group).len();
        let values: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|k| finite_diff_scalar(set, &loss, group, k, h))
            .collect();
        out.params.group_mut(group).copy_from_slice(&values);
    }
    out
}

/// Central differences of `loss(render(set, cam))` over every raw parameter.
/// Costs two renders per scalar, so only use it on tiny scenes.
pub fn finite_diff_gradients<F>(
    set: &GaussianSet,
    cam: &Camera,
    cfg: &RenderConfig,
    loss: F,
    h: f64,
) -> GradientBuffer
where
    F: Fn(&RenderOutput) -> f64 + Sync,
{
    finite_diff_set_gradients(set, |s| loss(&render(s, cam, cfg)), h)
}
