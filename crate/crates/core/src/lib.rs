//! Differentiable CPU Gaussian splatting with pluggable coordinate
//! parametrizations.
//!
//! Three parametrizations of Gaussian position and scale are supported:
//! plain Cartesian, homogeneous (position and scale share a learnable
//! weight `w`, decoded as `mu_tilde / w` and `s_tilde / w`) and inverted
//! spherical (`theta`, `phi`, inverted depth `w'`). Everything downstream of
//! decoding (projection, compositing, gradients, optimization) is shared.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod geometry;
pub mod grad;
pub mod image;
pub mod io;
pub mod optim;
pub mod render;
pub mod scene;

pub use error::{Error, Result};
pub use geometry::{Parametrization, RawGeometry};
pub use grad::{backward, GradientBuffer};
pub use image::{DepthMap, Image};
pub use optim::{TrainConfig, Trainer};
pub use render::{render, Camera, RenderConfig, RenderOutput};
pub use scene::{GaussianSet, ParamArrays, PointCloud};
