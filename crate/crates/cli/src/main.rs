//! `glint` command-line driver.

use std::fs;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glint::eval::{chain_histogram_csv, compare_runs, frame_metrics, MetricReport};
use glint::explore::AcceptanceMode;
use glint::image::Image;
use glint::infer::render_network;
use glint::net::checkpoint::load_for_space;
use glint::scene::{instantiate, Camera, SceneSpace, SceneVector};
use glint::tracer::render_image;
use glint::train::{
    latest_checkpoint, FrameSelection, ResolutionMode, SamplerMode, TargetMode, TrainConfig, TrainError, TrainLog,
    Trainer, ValidationSet,
};
use glint_serve::ServeConfig;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Neural global illumination for variable scenes.
#[derive(Debug, Parser)]
#[command(name = "glint", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network on a variable scene and write a run directory.
    Train(TrainArgs),
    /// Render one scene configuration with a checkpoint or the path tracer.
    Render(RenderArgs),
    /// Score a run's checkpoint against a validation directory (CSV).
    Eval(EvalArgs),
    /// Histogram of chain states over two state components (PFM).
    DiagMcmc(DiagArgs),
    /// Print the dimension and parameter table of a scene space.
    InspectSpace(InspectArgs),
    /// Start the HTTP inference service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Builtin scene name (CornellVar, MirrorRoom, CausticBox) or path to a
    /// scene-space JSON file.
    #[arg(long)]
    scene: String,
    /// Number of training iterations.
    #[arg(long)]
    iters: u64,
    /// Patch sampler: mcmc or uniform.
    #[arg(long, default_value = "mcmc")]
    mode: SamplerMode,
    /// Image-resolution schedule: adaptive or fixed.
    #[arg(long, default_value = "adaptive")]
    resolution: ResolutionMode,
    /// Chain acceptance rule: greedy, metropolis or always.
    #[arg(long, default_value = "greedy")]
    acceptance: AcceptanceMode,
    /// Seed for weights, chains and path tracing.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Samples per pixel for ground-truth patches.
    #[arg(long)]
    spp: Option<u32>,
    /// Hidden-layer width.
    #[arg(long)]
    hidden: Option<usize>,
    /// Number of hidden layers.
    #[arg(long)]
    layers: Option<usize>,
    /// JSON training config used as the base; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f32>,
    /// Patch edge length in pixels.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Number of parallel chains (patches per batch).
    #[arg(long)]
    chains: Option<usize>,
    /// Chain target: loss-times-step or loss-only.
    #[arg(long)]
    target: Option<TargetMode>,
    /// Disable replay of stored samples.
    #[arg(long)]
    no_reuse: bool,
    /// Validate every this many iterations (0 disables validation).
    #[arg(long)]
    validation_every: Option<u64>,
    /// Number of validation frames.
    #[arg(long)]
    validation_frames: Option<usize>,
    /// Samples per pixel of validation references.
    #[arg(long)]
    validation_spp: Option<u32>,
    /// Resolution of validation frames.
    #[arg(long)]
    validation_resolution: Option<usize>,
    /// Validation frame selection: uniform or mirror-visible.
    #[arg(long)]
    validation_selection: Option<FrameSelection>,
    /// Also write a checkpoint every this many iterations.
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Checkpoint to render with; optional with --gt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Normalized scene vector, comma separated, every value in [0, 1].
    #[arg(long, allow_hyphen_values = true)]
    vector: String,
    /// Camera as "px,py,pz,lx,ly,lz"; the scene's default camera if absent.
    #[arg(long, allow_hyphen_values = true)]
    camera: Option<String>,
    /// Image resolution (square).
    #[arg(long)]
    res: usize,
    /// Output image; `.pfm` for radiance, `.ppm` for tone-mapped 8-bit.
    #[arg(long)]
    out: PathBuf,
    /// Render the path-traced reference instead of the network.
    #[arg(long)]
    gt: bool,
    /// Samples per pixel for --gt.
    #[arg(long, default_value_t = 256)]
    spp: u32,
    /// Scene space; defaults to the config.json of the checkpoint's run.
    #[arg(long)]
    scene: Option<String>,
    /// Path-tracing seed for --gt.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exposure scale applied before tone mapping PPM output.
    #[arg(long, default_value_t = 1.0)]
    exposure: f32,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Run directory; repeat to compare several runs in one CSV.
    #[arg(long, required = true)]
    run: Vec<PathBuf>,
    /// Validation directory with frame_XXX.json and reference PFMs.
    #[arg(long)]
    validation: PathBuf,
    /// Output CSV; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagArgs {
    /// Run directory containing chains.csv.
    #[arg(long)]
    run: PathBuf,
    /// Two state components to project onto, "i,j".
    #[arg(long)]
    dims: String,
    /// Bins per axis.
    #[arg(long, default_value_t = 32)]
    bins: usize,
    /// Ignore chain rows before this iteration.
    #[arg(long, default_value_t = 0)]
    warmup: u64,
    /// Output PFM; defaults to RUN/histogram_I_J.pfm.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Builtin scene name or path to a scene-space JSON file.
    #[arg(long)]
    scene: String,
    /// Print the same JSON summary the HTTP service returns.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Checkpoint to serve.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Scene space; defaults to the config.json of the checkpoint's run.
    #[arg(long)]
    scene: Option<String>,
    /// TCP port.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Restrict CORS to this origin; any origin if absent.
    #[arg(long)]
    cors_origin: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Diverged(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Diverged(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Scene(_) | TrainError::MissingValidation(_) => CliError::Config(e.to_string()),
            TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn config_err(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| config_err(format!("{what}: `{s}`: {e}"))))
        .collect()
}

fn parse_vector(text: &str, space: &SceneSpace) -> Result<SceneVector, CliError> {
    let values = parse_floats(text, "--vector")?;
    if values.len() != space.dim() {
        return Err(config_err(format!("--vector: expected {} values, got {}", space.dim(), values.len())));
    }
    SceneVector::new(values).map_err(|e| config_err(format!("--vector: {e}")))
}

fn parse_camera(text: Option<&str>, space: &SceneSpace) -> Result<Camera, CliError> {
    let Some(text) = text else {
        return Ok(space.camera().default_camera());
    };
    let values = parse_floats(text, "--camera")?;
    let camera = Camera::from_slice(&values)
        .ok_or_else(|| config_err(format!("--camera: expected 6 values, got {}", values.len())))?;
    if !camera.is_valid() {
        return Err(config_err("--camera: position and lookat must be finite and distinct"));
    }
    Ok(camera)
}

fn run_config(run: &Path) -> Result<TrainConfig, CliError> {
    let path = run.join("config.json");
    let text = fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// Scene from `--scene`, or from the run a checkpoint at
/// `RUN/checkpoints/ckpt_N.bin` belongs to.
fn scene_for(scene: Option<&str>, checkpoint: Option<&Path>) -> Result<SceneSpace, CliError> {
    let name = match (scene, checkpoint) {
        (Some(s), _) => s.to_string(),
        (None, Some(ckpt)) => {
            let run = ckpt
                .parent()
                .and_then(Path::parent)
                .ok_or_else(|| config_err("--scene is required when the checkpoint is not inside a run directory"))?;
            run_config(run)?.scene
        }
        (None, None) => return Err(config_err("--scene is required")),
    };
    SceneSpace::resolve(&name).map_err(config_err)
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut c = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<TrainConfig>(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::desk(&args.scene),
    };
    c.scene = args.scene;
    c.iterations = args.iters;
    c.sampler = args.mode;
    c.resolution_mode = args.resolution;
    c.acceptance = args.acceptance;
    c.seed = args.seed;
    c.spp = args.spp.unwrap_or(c.spp);
    c.hidden = args.hidden.unwrap_or(c.hidden);
    c.layers = args.layers.unwrap_or(c.layers);
    c.adam.lr = args.lr.unwrap_or(c.adam.lr);
    c.patch_size = args.patch_size.unwrap_or(c.patch_size);
    c.batch_chains = args.chains.unwrap_or(c.batch_chains);
    c.target = args.target.unwrap_or(c.target);
    c.reuse &= !args.no_reuse;
    c.validation.every = args.validation_every.unwrap_or(c.validation.every);
    c.validation.frames = args.validation_frames.unwrap_or(c.validation.frames);
    c.validation.spp = args.validation_spp.unwrap_or(c.validation.spp);
    c.validation.resolution = args.validation_resolution.unwrap_or(c.validation.resolution);
    c.validation.selection = args.validation_selection.unwrap_or(c.validation.selection);
    c.checkpoint_every = args.checkpoint_every.unwrap_or(c.checkpoint_every);
    for w in c.warnings() {
        eprintln!("warning: {w}");
    }
    let mut trainer = Trainer::new(c)?.with_run_dir(&args.out)?;
    let outcome = trainer.run()?;
    if let Some(last) = outcome.log.last() {
        eprintln!("finished {} iterations in {:.1} s, loss {:.4}", last.iteration + 1, last.wall_seconds, last.loss);
    }
    if let Some(v) = outcome.validation {
        eprintln!("validation: loss {:.4}  MAPE {:.4}  MAE {:.4}  DSSIM {:.4}", v.loss, v.mape, v.mae, v.dssim);
    }
    Ok(())
}

fn write_image(img: &Image, path: &Path, exposure: f32) -> Result<(), CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "pfm" => img.write_pfm(path).map_err(runtime_err),
        "ppm" => img.write_ppm(path, exposure).map_err(runtime_err),
        _ => Err(config_err(format!("--out: unsupported extension `{ext}` (use .pfm or .ppm)"))),
    }
}

fn render(args: RenderArgs) -> Result<(), CliError> {
    let space = scene_for(args.scene.as_deref(), args.checkpoint.as_deref())?;
    let v = parse_vector(&args.vector, &space)?;
    let camera = parse_camera(args.camera.as_deref(), &space)?;
    if args.res == 0 || args.spp == 0 {
        return Err(config_err("--res and --spp must be positive"));
    }
    let inst = instantiate(&space, &v, camera);
    let img = if args.gt {
        render_image(&inst, args.res, args.spp, args.seed).0
    } else {
        let ckpt = args.checkpoint.as_deref().ok_or_else(|| config_err("--checkpoint is required without --gt"))?;
        let (net, _) = load_for_space(ckpt, space.dim()).map_err(config_err)?;
        render_network(&net, &inst, v.values(), args.res).map_err(runtime_err)?
    };
    write_image(&img, &args.out, args.exposure)
}

fn eval_run(run: &Path, validation: &Path) -> Result<MetricReport, CliError> {
    let config = run_config(run)?;
    let space = SceneSpace::resolve(&config.scene).map_err(config_err)?;
    let ckpt = latest_checkpoint(run).ok_or_else(|| config_err(format!("{}: no checkpoints", run.display())))?;
    let (net, adam) = load_for_space(&ckpt, space.dim()).map_err(config_err)?;
    let set = ValidationSet::read(validation, &space)?;
    let preds = set.predict(&net)?;
    let frames = preds.iter().zip(&set.frames).map(|(p, f)| frame_metrics(p, &f.target)).collect();
    let wall = fs::File::open(run.join("log.csv"))
        .ok()
        .and_then(|f| TrainLog::read_csv(f).ok())
        .and_then(|log| log.last().map(|r| r.wall_seconds))
        .unwrap_or(0.0);
    let label = run.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| run.display().to_string());
    let report = MetricReport::new(&label, config.sampler.as_str(), adam.t, wall, frames);
    eprintln!("{}", report.summary());
    Ok(report)
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let reports = args.run.iter().map(|r| eval_run(r, &args.validation)).collect::<Result<Vec<_>, _>>()?;
    match &args.out {
        Some(path) => compare_runs(&reports, fs::File::create(path).map_err(runtime_err)?).map_err(runtime_err),
        None => compare_runs(&reports, io::stdout().lock()).map_err(runtime_err),
    }
}

fn diag_mcmc(args: DiagArgs) -> Result<(), CliError> {
    let dims = parse_floats(&args.dims, "--dims")?;
    let (i, j) = match dims.as_slice() {
        [i, j] if i.fract() == 0.0 && j.fract() == 0.0 && *i >= 0.0 && *j >= 0.0 => (*i as usize, *j as usize),
        _ => return Err(config_err("--dims: expected two component indices \"i,j\"")),
    };
    if args.bins < 2 {
        return Err(config_err("--bins must be at least 2"));
    }
    let path = args.run.join("chains.csv");
    let file = fs::File::open(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let hist = chain_histogram_csv(file, (i, j), args.bins, args.warmup).map_err(config_err)?;
    let out = args.out.unwrap_or_else(|| args.run.join(format!("histogram_{i}_{j}.pfm")));
    hist.to_image().write_pfm(&out).map_err(runtime_err)?;
    let (stat, p) = hist.chi_square_uniform();
    eprintln!(
        "{} states in {} of {} bins; chi-square vs uniform {:.1} (p = {:.3e}); wrote {}",
        hist.total(),
        hist.nonzero_bins(),
        args.bins * args.bins,
        stat,
        p,
        out.display()
    );
    Ok(())
}

fn inspect_space(args: InspectArgs) -> Result<(), CliError> {
    let space = SceneSpace::resolve(&args.scene).map_err(config_err)?;
    let summary = space.summary();
    let text = if args.json { serde_json::to_string_pretty(&summary).map_err(runtime_err)? + "\n" } else { summary.table() };
    io::stdout().lock().write_all(text.as_bytes()).map_err(runtime_err)
}

fn serve(args: ServeArgs, workers: usize) -> Result<(), CliError> {
    let space = scene_for(args.scene.as_deref(), Some(&args.checkpoint))?;
    if !args.checkpoint.exists() {
        return Err(config_err(format!("{}: no such checkpoint", args.checkpoint.display())));
    }
    let config = ServeConfig {
        checkpoint: args.checkpoint,
        addr: SocketAddr::new(args.host, args.port),
        workers,
        cors_origin: args.cors_origin,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime_err)?;
    eprintln!("serving on http://{}", config.addr);
    runtime.block_on(glint_serve::serve(space, config)).map_err(|e| match e {
        glint_serve::ServeError::Checkpoint(_) | glint_serve::ServeError::Origin(_) => config_err(e),
        other => runtime_err(other),
    })
}

/// Worker count from `GLINT_THREADS`, else the machine's parallelism.
fn worker_count() -> Result<usize, CliError> {
    match std::env::var("GLINT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(config_err(format!("GLINT_THREADS: expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let workers = worker_count()?;
    rayon::ThreadPoolBuilder::new().num_threads(workers).build_global().map_err(runtime_err)?;
    match cli.command {
        Command::Train(a) => train(a),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::DiagMcmc(a) => diag_mcmc(a),
        Command::InspectSpace(a) => inspect_space(a),
        Command::Serve(a) => serve(a, workers),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
