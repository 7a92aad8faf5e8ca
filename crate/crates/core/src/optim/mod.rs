//! Training: Adam with per-group learning rates, the photometric loss,
//! adaptive density control and the training loop.

mod adam;
mod config;
mod densify;
mod loss;
mod schedule;
mod trainer;

pub use adam::{AdamHyper, AdamState, GroupRates};
pub use config::TrainConfig;
pub use densify::{densify_and_prune, DensifyParams, DensifyReport, DensifyStats};
pub use loss::photometric_loss;
pub use schedule::ExpSchedule;
pub use trainer::{scene_extent, StepReport, Trainer, TrainerState};
