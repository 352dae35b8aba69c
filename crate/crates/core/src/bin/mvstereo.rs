use clap::{Args, Parser, Subcommand};
use mvstereo::config::{ConfigError, RunConfig};
use mvstereo::pipeline;
use std::path::PathBuf;
use std::process::ExitCode;

/// Instance-aware multi-view stereo pipeline.
#[derive(Parser)]
#[command(name = "mvstereo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each one overrides the corresponding
/// config-file key.
#[derive(Args, Clone)]
struct Overrides {
    /// TOML config file (flat key set; flags below override it).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene preset: plane-wall, shelf or orchard.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Enable the instance-aware refinement pass.
    #[arg(long)]
    ifads: bool,
    /// Enable percentile truncation of instance ranges (implies --ifads).
    #[arg(long)]
    fiic: bool,
    /// Enable the conditional confidence model.
    #[arg(long)]
    cpc: bool,
    /// Confidence threshold applied before fusion.
    #[arg(long)]
    tau_c: Option<f64>,
    /// Final-interval half width in mm (0 = half the finest spacing).
    #[arg(long)]
    delta: Option<f64>,
    /// FIIC keep fraction in (0, 1].
    #[arg(long)]
    keep: Option<f64>,
    /// Per-stage hypothesis counts, comma-separated (e.g. 64,32,16).
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<usize>>,
    /// Number of rendered views.
    #[arg(long)]
    views: Option<usize>,
    /// Fuse ground-truth depth maps instead of estimates.
    #[arg(long)]
    gt_bypass: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene preset: images, GT depth, labels, cameras, masks.
    Render(Overrides),
    /// Estimate per-view depth and confidence from rendered artifacts.
    Depth(Overrides),
    /// Fuse per-view depth maps into a point cloud.
    Fuse(Overrides),
    /// Fuse and score against the ground-truth cloud.
    Eval(Overrides),
    /// Run the four-variant component ablation.
    Ablate(Overrides),
    /// render -> depth -> fuse -> eval in one run.
    Pipeline(Overrides),
}

fn resolve(ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &ov.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &ov.preset {
        cfg.scene = p.clone();
    }
    if let Some(out) = &ov.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if ov.ifads || ov.fiic {
        cfg.ifads = true;
    }
    if ov.fiic {
        cfg.fiic = true;
    }
    if ov.cpc {
        cfg.cpc = true;
    }
    if let Some(t) = ov.tau_c {
        cfg.tau_conf = t;
    }
    if let Some(d) = ov.delta {
        cfg.delta = d;
    }
    if let Some(k) = ov.keep {
        cfg.keep = k;
    }
    if let Some(stages) = &ov.stages {
        cfg.stages = stages.clone();
        if cfg.shrink.len() + 1 != cfg.stages.len() {
            cfg.shrink = vec![0.25; cfg.stages.len().saturating_sub(1)];
        }
    }
    if let Some(v) = ov.views {
        cfg.views = v;
    }
    if ov.gt_bypass {
        cfg.gt_bypass = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

fn run(cmd: &Command) -> Result<(), u8> {
    let ov = match cmd {
        Command::Render(o)
        | Command::Depth(o)
        | Command::Fuse(o)
        | Command::Eval(o)
        | Command::Ablate(o)
        | Command::Pipeline(o) => o,
    };
    let cfg = resolve(ov).map_err(|e| {
        eprintln!("config error: {e}");
        EXIT_CONFIG
    })?;
    let data_err = |e: anyhow::Error| {
        eprintln!("error: {e:#}");
        EXIT_DATA
    };
    match cmd {
        Command::Render(_) => pipeline::cmd_render(&cfg).map_err(data_err)?,
        Command::Depth(_) => pipeline::cmd_depth(&cfg).map_err(data_err)?,
        Command::Fuse(_) | Command::Eval(_) => {
            pipeline::cmd_fuse_eval(&cfg).map(|_| ()).map_err(data_err)?
        }
        Command::Ablate(_) => {
            let results = pipeline::cmd_ablate(&cfg).map_err(data_err)?;
            if results.is_empty() {
                eprintln!("error: every ablation variant failed");
                return Err(EXIT_DATA);
            }
        }
        Command::Pipeline(_) => pipeline::cmd_pipeline(&cfg).map(|_| ()).map_err(data_err)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| run(&cli.command));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(code)) => ExitCode::from(code),
        Err(_) => {
            eprintln!("internal invariant violation");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
