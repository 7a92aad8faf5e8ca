//! Image metrics, near/far depth masks, train/test splitting and training
//! telemetry.

pub mod masks;
pub mod metrics;
pub mod report;
pub mod telemetry;

pub use masks::{compute_far_masks, split_train_test, DepthMask, Split};
pub use metrics::{masked_psnr, masked_ssim, psnr, ssim, ssim_map, ssim_with_grad, PSNR_CAP};
pub use report::{evaluate_pair, evaluate_views, MetricReport, MetricRow};
pub use telemetry::{spearman, telemetry_snapshot, TelemetrySnapshot, WHistogram};
