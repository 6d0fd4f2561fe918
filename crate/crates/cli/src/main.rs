//! `roomlayout`: solve, evaluate, render and synthesize room layouts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use roomlayout::formats::{encode_label_png, write_pfm};
use roomlayout::layout::{build_layout, Layout};
use roomlayout::metrics::evaluate;
use roomlayout::pipeline::{solve_scene, PipelineConfig};
use roomlayout::raster::render_layout_depth;
use roomlayout::scene::{load_scene, DepthMode};
use roomlayout::synth::{generate_scene, save_synth, NoiseModel, Preset, SynthSpec};
use roomlayout::LayoutError;

#[derive(Parser)]
#[command(name = "roomlayout", version, about = "General 3D room layout from a single view")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the layout of a scene directory.
    Solve(SolveArgs),
    /// Compare a predicted layout with ground truth.
    Eval(EvalArgs),
    /// Render a layout's depth (and optionally labels) in a scene's camera.
    Render(RenderArgs),
    /// Write a synthetic scene directory with ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DepthSource {
    /// Sensor depth with trusted scale.
    Measured,
    /// Depth predicted from color; scale is not trusted.
    ProvidedPredicted,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Output layout JSON.
    #[arg(long)]
    out: PathBuf,
    /// Weight of the segmentation term.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Maximum refinement iterations.
    #[arg(long, default_value_t = 5)]
    max_refine: usize,
    /// RANSAC seed for missing-plane detection.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip render-and-compare refinement.
    #[arg(long)]
    no_refine: bool,
    /// Overrides the depth mode recorded in the scene.
    #[arg(long, value_enum)]
    depth_source: Option<DepthSource>,
    /// Also export the layout as Wavefront OBJ.
    #[arg(long)]
    obj: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Scene directory supplying the camera and depth mode.
    #[arg(long)]
    scene: PathBuf,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also report scale-corrected RMSE (implied for predicted depth).
    #[arg(long)]
    uts: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Output depth PFM.
    #[arg(long)]
    out: PathBuf,
    /// Output 16-bit label PNG (polygon id + 1, 0 for background).
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// cuboid, lshape, occluded-wall, no-floor or tshape.
    #[arg(long)]
    preset: Preset,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated key=value terms: angle (deg), offset (m), depth (m),
    /// erode (px), holes (px), jitter (deg), dropout (ids joined by '+').
    #[arg(long, default_value = "")]
    noise: NoiseModel,
    /// Flag the depth as predicted rather than measured.
    #[arg(long)]
    predicted: bool,
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_layout(path: &Path) -> anyhow::Result<Layout> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Layout::from_json(&bytes)?)
}

fn solve(args: SolveArgs) -> anyhow::Result<()> {
    let mut scene = load_scene(&args.scene)?;
    match args.depth_source {
        Some(DepthSource::Measured) => scene.mode = DepthMode::Rgbd,
        Some(DepthSource::ProvidedPredicted) => scene.mode = DepthMode::RgbPredicted,
        None => {}
    }
    let mut cfg = PipelineConfig::default();
    cfg.solve.lambda = args.lambda;
    cfg.refine.max_iterations = args.max_refine;
    cfg.ransac.seed = args.seed;
    cfg.refine_enabled = !args.no_refine;
    let out = solve_scene(&scene, &cfg)?;
    let trace = serde_json::to_value(&out.trace)?;
    let layout = build_layout(&out.solution().polygons, &out.stage.candidates, trace)?;
    write(&args.out, layout.to_json().as_bytes())?;
    if let Some(obj) = &args.obj {
        write(obj, layout.to_obj()?.as_bytes())?;
    }
    log::info!(
        "{} polygons, cost {:.6}, written to {}",
        layout.polygons.len(),
        out.solution().cost,
        args.out.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let pred = read_layout(&args.pred)?;
    let gt = read_layout(&args.gt)?;
    let scene = load_scene(&args.scene)?;
    let uts = args.uts || scene.mode == DepthMode::RgbPredicted;
    let report = evaluate(&pred, &gt, &scene.intrinsics, uts, None)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(path) => write(path, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn render(args: RenderArgs) -> anyhow::Result<()> {
    let layout = read_layout(&args.layout)?;
    let scene = load_scene(&args.scene)?;
    let (depth, labels) = render_layout_depth(&layout.facets(), &scene.intrinsics);
    write_pfm(&args.out, &depth)?;
    if let Some(path) = &args.labels {
        write(path, &encode_label_png(&labels)?)?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let mut spec = SynthSpec::preset(args.preset);
    spec.seed = args.seed;
    // keep preset-specific dropout unless the user names their own
    if !args.noise.dropout.is_empty() || spec.noise.dropout.is_empty() {
        spec.noise = args.noise;
    } else {
        spec.noise = NoiseModel {
            dropout: spec.noise.dropout,
            ..args.noise
        };
    }
    if args.predicted {
        spec.mode = DepthMode::RgbPredicted;
    }
    let scene = generate_scene(&spec)?;
    save_synth(&scene, &args.out)?;
    Ok(())
}

fn error_json(err: &anyhow::Error) -> serde_json::Value {
    let kind = if let Some(e) = err.downcast_ref::<LayoutError>() {
        e.kind()
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else if err.downcast_ref::<serde_json::Error>().is_some() {
        "json"
    } else {
        "error"
    };
    serde_json::json!({ "error": kind, "message": format!("{err:#}") })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let json = serde_json::json!({ "error": "usage", "message": e.to_string().trim_end() });
            eprintln!("{json}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
