use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use hogs_core::Parametrization;

/// Gaussian splatting on the CPU with Cartesian, homogeneous and inverted
/// spherical parametrizations.
#[derive(Debug, Parser)]
#[command(name = "hogs", version, propagate_version = true)]
pub struct Cli {
    /// Worker threads; 0 uses every core. `--threads 1` is the
    /// bit-deterministic reference mode.
    #[arg(long, global = true, env = "HOGS_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a scene manifest; writes checkpoints, config.json, loss.csv
    /// and telemetry CSVs to the output directory.
    Train(TrainArgs),
    /// Render views of a checkpoint to PNG (and optionally PFM depth).
    Render(RenderArgs),
    /// Score a checkpoint against the ground-truth images as a metric CSV.
    Eval(EvalArgs),
    /// Run the 1D Cartesian vs homogeneous convergence simulation.
    #[command(name = "simulate-1d")]
    Simulate1d(SimArgs),
    /// Export a checkpoint as a 3DGS-compatible PLY (decoded to Cartesian).
    Export(ExportArgs),
    /// Summarize a checkpoint: count, parametrization, distance and w
    /// statistics.
    Inspect(InspectArgs),
    /// Write the synthetic near/far scene as a manifest directory.
    Fixture(FixtureArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    /// Full-length defaults (50k iterations, schedules over 30k steps).
    Full,
    /// Short runs: schedules scaled to --iterations (default 3000).
    Desk,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scene manifest (JSON).
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Base configuration the config file and overrides apply to.
    #[arg(long, value_enum, default_value = "full")]
    pub preset: Preset,
    /// JSON config file with any subset of the training config keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// One of cartesian, homogeneous, inverted-spherical.
    #[arg(long)]
    pub parametrization: Option<Parametrization>,
    /// Number of training iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// RNG seed for initialization, view order and densification.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplier on the weight (rho) learning rate.
    #[arg(long)]
    pub lr_w_multiplier: Option<f64>,
    /// Initial weight: `1/d`, `random` or a positive constant.
    #[arg(long)]
    pub w_init: Option<String>,
    /// Save a checkpoint every N iterations (0 disables).
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    /// Config override `key=value`, dotted for nested keys (e.g.
    /// `skybox.count=64`). Repeatable; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Continue from a checkpoint; its stored config is used.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("views").required(true).args(["view", "all_test"])))]
pub struct RenderArgs {
    /// Checkpoint file.
    pub checkpoint: PathBuf,
    /// Scene manifest; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// View index to render. Repeatable.
    #[arg(long)]
    pub view: Vec<usize>,
    /// Render every test-split view.
    #[arg(long)]
    pub all_test: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the expected depth as PFM.
    #[arg(long)]
    pub depth: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitChoice {
    Test,
    Train,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file.
    pub checkpoint: PathBuf,
    /// Scene manifest; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Depth percentile separating near from far pixels.
    #[arg(long, default_value_t = 95.0)]
    pub far_percentile: f64,
    /// Views to score.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Learning rate shared by both representations.
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Comma-separated target positions.
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 50.0, 250.0])]
    pub targets: Vec<f64>,
    /// Iteration cap per trace.
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Distance to the target that counts as converged.
    #[arg(long, default_value_t = 0.5)]
    pub tol: f64,
    /// `adam` or `sgd`.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    /// How the optimized scalar maps to w: `exp` or `linear`.
    #[arg(long, default_value = "exp")]
    pub w_activation: String,
    /// Keep w fixed and optimize only the homogeneous coordinate.
    #[arg(long)]
    pub fixed_w: bool,
    /// Keep iterating after convergence up to --max-iters.
    #[arg(long)]
    pub full_trace: bool,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Checkpoint file.
    pub checkpoint: PathBuf,
    /// Output PLY path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Checkpoint file.
    pub checkpoint: PathBuf,
    /// Write the w histogram as CSV.
    #[arg(long)]
    pub histogram_out: Option<PathBuf>,
    /// Print the summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene seed.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Gaussians in the near cluster.
    #[arg(long, default_value_t = 120)]
    pub near_count: usize,
    /// Gaussians in the far shell.
    #[arg(long, default_value_t = 500)]
    pub far_count: usize,
    /// Number of camera views.
    #[arg(long, default_value_t = 16)]
    pub views: usize,
    /// Image width in pixels.
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Image height in pixels.
    #[arg(long, default_value_t = 64)]
    pub height: usize,
}
