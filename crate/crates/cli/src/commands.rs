use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hogs_core::convergence::{emit_convergence_csv, simulate_1d, Representation, Sim1DConfig};
use hogs_core::eval::telemetry::write_histogram_csv;
use hogs_core::eval::{compute_far_masks, evaluate_views, split_train_test, telemetry_snapshot, TelemetrySnapshot};
use hogs_core::fixtures::{generate, write_scene, SyntheticSceneSpec};
use hogs_core::io::{export_3dgs_ply, load_checkpoint, load_scene, save_checkpoint, write_pfm, write_png, Endian, LoadedScene};
use hogs_core::optim::TrainerState;
use hogs_core::{DepthMap, RenderConfig, TrainConfig, Trainer};
use log::{info, warn};
use serde::Serialize;

use crate::args::{EvalArgs, ExportArgs, FixtureArgs, InspectArgs, Preset, RenderArgs, SimArgs, SplitChoice, TrainArgs};
use crate::overrides::{build_config, UsageError};

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_scene_logged(path: &Path) -> Result<LoadedScene> {
    let scene = load_scene(path)?;
    for w in &scene.warnings {
        warn!("{w}");
    }
    Ok(scene)
}

/// The manifest given on the command line, else the one recorded at
/// training time.
fn resolve_manifest(flag: Option<&PathBuf>, state: &TrainerState) -> Result<PathBuf> {
    match (flag, &state.manifest_path) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(p)) => Ok(p.clone()),
        (None, None) => Err(UsageError("checkpoint records no manifest; pass --manifest".into()).into()),
    }
}

fn render_config(state: &TrainerState) -> RenderConfig {
    RenderConfig {
        background: state.config.background,
        ..RenderConfig::default()
    }
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let base = match args.preset {
        Preset::Full => TrainConfig::default(),
        Preset::Desk => TrainConfig::desk(args.iterations.unwrap_or(3000)),
    };
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            Some(value)
        }
        None => None,
    };
    let mut sets = Vec::new();
    if let Some(p) = args.parametrization {
        sets.push(format!("parametrization={p}"));
    }
    if let Some(n) = args.iterations {
        sets.push(format!("iterations={n}"));
    }
    if let Some(s) = args.seed {
        sets.push(format!("seed={s}"));
    }
    if let Some(m) = args.lr_w_multiplier {
        sets.push(format!("lr_w_multiplier={m}"));
    }
    if let Some(w) = &args.w_init {
        sets.push(format!("w_init={w}"));
    }
    if let Some(n) = args.checkpoint_interval {
        sets.push(format!("checkpoint_interval={n}"));
    }
    sets.extend(args.set.iter().cloned());
    Ok(build_config(base, file.as_ref(), &sets)?)
}

fn write_telemetry(out: &Path, snapshots: &[TelemetrySnapshot], homogeneous: bool) -> Result<()> {
    let path = out.join("telemetry.csv");
    let mut wtr = csv::Writer::from_writer(create_file(&path)?);
    wtr.write_record(["iter", "count", "mean_dist_farthest_10pct", "spearman_w_distance"])?;
    for s in snapshots {
        let rho = s.w_histogram.as_ref().and_then(|h| h.spearman_w_vs_distance());
        wtr.write_record([
            s.iteration.to_string(),
            s.count.to_string(),
            s.mean_dist_farthest_10pct.to_string(),
            rho.map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    if homogeneous {
        write_histogram_csv(create_file(&out.join("w_histogram.csv"))?, snapshots)?;
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let scene = load_scene_logged(&args.manifest)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;

    let mut trainer = match &args.resume {
        Some(ckpt) => {
            if args.config.is_some() || !args.set.is_empty() {
                warn!("resuming: configuration comes from the checkpoint, overrides are ignored");
            }
            let state = load_checkpoint(ckpt)?;
            info!("resuming {} at iteration {}", ckpt.display(), state.iteration);
            Trainer::resume(state, scene.cameras, scene.images)?
        }
        None => {
            let config = train_config(args)?;
            let split = split_train_test(scene.cameras.len());
            let mut t = Trainer::new(config, &scene.point_cloud, scene.cameras, scene.images, split.train)?;
            let manifest = fs::canonicalize(&args.manifest).unwrap_or_else(|_| args.manifest.clone());
            t.state.manifest_path = Some(manifest);
            t
        }
    };
    let config = trainer.state.config.clone();
    let config_path = args.out.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&config)? + "\n")
        .with_context(|| format!("cannot write {}", config_path.display()))?;
    info!(
        "training {} gaussians ({}) for {} iterations",
        trainer.set().len(),
        config.parametrization,
        config.iterations
    );

    let mut loss_csv = csv::Writer::from_writer(create_file(&args.out.join("loss.csv"))?);
    loss_csv.write_record(["iter", "view", "loss", "gaussians"])?;
    let mut snapshots = Vec::new();
    let homogeneous = config.parametrization == hogs_core::Parametrization::Homogeneous;
    let out = args.out.clone();
    trainer.run(|t, report| {
        let k = report.iteration;
        loss_csv
            .write_record([k.to_string(), report.view.to_string(), report.loss.to_string(), report.gaussian_count.to_string()])
            .map_err(hogs_core::Error::from)?;
        if let Some(d) = &report.densify {
            info!(
                "iter {k}: densify +{} cloned +{} split -{} pruned -> {}",
                d.cloned,
                d.split,
                d.pruned(),
                d.after
            );
        }
        if k % config.telemetry_interval == 0 {
            info!("iter {k}: loss {:.5}, {} gaussians", report.loss, report.gaussian_count);
            snapshots.push(telemetry_snapshot(t.set(), k));
        }
        if config.checkpoint_interval > 0 && k % config.checkpoint_interval == 0 {
            save_checkpoint(&out.join(format!("checkpoint_{k:06}.hgsc")), &t.state)?;
        }
        Ok(())
    })?;
    loss_csv.flush()?;

    let final_iter = trainer.iteration();
    if snapshots.last().map(|s| s.iteration) != Some(final_iter) {
        snapshots.push(telemetry_snapshot(trainer.set(), final_iter));
    }
    write_telemetry(&args.out, &snapshots, homogeneous)?;
    let final_path = args.out.join("final.hgsc");
    save_checkpoint(&final_path, &trainer.state)?;
    println!("{}", final_path.display());
    Ok(())
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let scene = load_scene_logged(&resolve_manifest(args.manifest.as_ref(), &state)?)?;
    let views = if args.all_test {
        split_train_test(scene.cameras.len()).test
    } else {
        args.view.clone()
    };
    for &v in &views {
        if v >= scene.cameras.len() {
            bail!(UsageError(format!("view {v} out of range ({} views)", scene.cameras.len())));
        }
    }
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let cfg = render_config(&state);
    for &v in &views {
        let out = hogs_core::render(&state.set, &scene.cameras[v], &cfg);
        let path = args.out.join(format!("view_{v:03}.png"));
        write_png(&path, &out.radiance)?;
        println!("{}", path.display());
        if args.depth {
            let map = DepthMap::from_data(out.width, out.height, out.depth_expected.clone())?;
            let path = args.out.join(format!("view_{v:03}_depth.pfm"));
            write_pfm(&path, &map, Endian::Little)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    if !(args.far_percentile > 0.0 && args.far_percentile < 100.0) {
        bail!(UsageError(format!("--far-percentile must lie in (0, 100), got {}", args.far_percentile)));
    }
    let state = load_checkpoint(&args.checkpoint)?;
    let scene = load_scene_logged(&resolve_manifest(args.manifest.as_ref(), &state)?)?;
    let split = split_train_test(scene.cameras.len());
    let (views, label) = match args.split {
        SplitChoice::Test => (split.test, "test"),
        SplitChoice::Train => (split.train, "train"),
        SplitChoice::All => ((0..scene.cameras.len()).collect(), "all"),
    };
    let depths: Option<Vec<&DepthMap>> = views.iter().map(|&v| scene.depths[v].as_ref()).collect();
    let masks = match depths {
        Some(d) => Some(compute_far_masks(&d, args.far_percentile)?),
        None => {
            warn!("some evaluated views have no depth map; near/far columns are left empty");
            None
        }
    };
    let report = evaluate_views(
        &state.set,
        &scene.cameras,
        &scene.images,
        &views,
        label,
        masks.as_deref(),
        &render_config(&state),
    )?;
    match &args.out {
        Some(path) => {
            report.write_csv(create_file(path)?)?;
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
            println!(
                "{} views: psnr {} ssim {} psnr_near {} psnr_far {}",
                report.rows.len(),
                fmt(report.mean_psnr()),
                fmt(report.mean_ssim()),
                fmt(report.mean_psnr_near()),
                fmt(report.mean_psnr_far())
            );
        }
        None => report.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

pub fn simulate_1d_cmd(args: &SimArgs) -> Result<()> {
    let cfg = Sim1DConfig {
        lr: args.lr,
        targets: args.targets.clone(),
        max_iters: args.max_iters,
        tol: args.tol,
        optimizer: args.optimizer.parse()?,
        w_activation: args.w_activation.parse()?,
        optimize_w: !args.fixed_w,
        stop_on_convergence: !args.full_trace,
        ..Sim1DConfig::default()
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut traces = Vec::new();
    for repr in Representation::ALL {
        traces.extend(simulate_1d(&cfg, repr)?);
    }
    let mut summary = String::new();
    for t in &traces {
        let iters = t.iterations_to_tol.map(|n| n.to_string()).unwrap_or_else(|| "not converged".into());
        summary.push_str(&format!("{} target {}: {iters}\n", t.representation, t.target));
    }
    match &args.out {
        Some(path) => {
            emit_convergence_csv(create_file(path)?, &traces)?;
            print!("{summary}");
        }
        None => {
            emit_convergence_csv(io::stdout().lock(), &traces)?;
            eprint!("{summary}");
        }
    }
    Ok(())
}

pub fn export(args: &ExportArgs) -> Result<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    export_3dgs_ply(&args.out, &state.set)?;
    println!("{} gaussians -> {}", state.set.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct InspectSummary<'a> {
    parametrization: String,
    iteration: usize,
    sh_degree: usize,
    active_sh_degree: usize,
    extent: f64,
    manifest: Option<&'a Path>,
    telemetry: TelemetrySnapshot,
}

pub fn inspect(args: &InspectArgs) -> Result<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let summary = InspectSummary {
        parametrization: state.set.parametrization.to_string(),
        iteration: state.iteration,
        sh_degree: state.set.sh_degree,
        active_sh_degree: state.set.active_sh_degree,
        extent: state.extent,
        manifest: state.manifest_path.as_deref(),
        telemetry: telemetry_snapshot(&state.set, state.iteration),
    };
    if let Some(path) = &args.histogram_out {
        if summary.telemetry.w_histogram.is_none() {
            warn!("no w histogram for this checkpoint; writing a header-only file");
        }
        write_histogram_csv(create_file(path)?, std::slice::from_ref(&summary.telemetry))?;
    }
    let mut out = io::stdout().lock();
    if args.json {
        serde_json::to_writer_pretty(&mut out, &summary)?;
        writeln!(out)?;
        return Ok(());
    }
    let t = &summary.telemetry;
    writeln!(out, "parametrization: {}", summary.parametrization)?;
    writeln!(out, "iteration: {}", summary.iteration)?;
    writeln!(out, "gaussians: {}", t.count)?;
    writeln!(out, "sh_degree: {} (active {})", summary.sh_degree, summary.active_sh_degree)?;
    writeln!(out, "extent: {}", summary.extent)?;
    writeln!(out, "farthest_10pct_mean_distance: {}", t.mean_dist_farthest_10pct)?;
    if let Some(m) = summary.manifest {
        writeln!(out, "manifest: {}", m.display())?;
    }
    if let Some(h) = &t.w_histogram {
        let rho = h.spearman_w_vs_distance().map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into());
        writeln!(out, "w_histogram: {} occupied bins, spearman(w, distance) {rho}", h.occupied().len())?;
        if let Some(path) = &args.histogram_out {
            writeln!(out, "w_histogram_csv: {}", path.display())?;
        }
    }
    Ok(())
}

pub fn fixture(args: &FixtureArgs) -> Result<()> {
    let spec = SyntheticSceneSpec {
        seed: args.seed,
        near_count: args.near_count,
        far_count: args.far_count,
        camera_count: args.views,
        width: args.width,
        height: args.height,
        ..SyntheticSceneSpec::default()
    };
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let scene = generate(&spec)?;
    let path = write_scene(&scene, &args.out)?;
    println!("{}", path.display());
    Ok(())
}
