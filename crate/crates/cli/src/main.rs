use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynscene::config::RunConfig;
use dynscene::kv::KeyValues;
use dynscene::pipeline;

#[derive(Parser, Debug)]
#[command(name = "dynscene", version, about = "Multi-view video grids and dynamic splat scenes from one video")]
struct Cli {
    /// Key-value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base preset when the config file names none: `standard` (64x64, 8 frames, 9 views) or `full` (576x1024, 16 frames, 25 views).
    #[arg(long, global = true, default_value = "standard")]
    preset: String,
    /// Override one key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    ablate: Ablations,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Ablations {
    /// Plain CFG everywhere on the first frame.
    #[arg(long, global = true)]
    no_adaptive_cfg: bool,
    /// Disable point-cloud guided denoising.
    #[arg(long, global = true)]
    no_pcgd: bool,
    /// Disable reference latent replacement.
    #[arg(long, global = true)]
    no_rlr: bool,
    /// Skip the fine stage.
    #[arg(long, global = true)]
    no_fine: bool,
    /// Supervise held-out cells with the generated images directly.
    #[arg(long, global = true)]
    no_modulation: bool,
}

impl Ablations {
    fn overrides(&self) -> Vec<String> {
        [
            (self.no_adaptive_cfg, "guidance.adaptive_cfg=false"),
            (self.no_pcgd, "guidance.pcgd_fraction=0"),
            (self.no_rlr, "guidance.rlr=false"),
            (self.no_fine, "train.fine=false"),
            (self.no_modulation, "refine.modulation=false"),
        ]
        .into_iter()
        .filter(|(on, _)| *on)
        .map(|(_, s)| s.to_string())
        .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline into one output tree.
    Run {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize the analytic scene bundle.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Point clouds and the coarse view grid.
    Geometry {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Guided generation over a coarse grid.
    Generate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        coarse: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the dynamic splat scene to a generated grid.
    Fit {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        coarse: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a checkpoint along a trajectory.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Comma-separated frame times; defaults to every integer frame.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare grids against a ground-truth grid.
    Metrics {
        /// `LABEL=DIR` or just `DIR` (label `grid`); repeatable.
        #[arg(long = "grid", required = true)]
        grids: Vec<String>,
        #[arg(long)]
        truth: PathBuf,
        /// Take visibility masks from this grid.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved configuration.
    Config,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut kv = match &cli.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::new(),
    };
    if kv.get("preset").is_none() {
        kv.insert("preset", &cli.preset);
    }
    let mut overrides = cli.sets.clone();
    overrides.extend(cli.ablate.overrides());
    Ok(RunConfig::from_kv(&kv)?.with_overrides(&overrides)?)
}

fn parse_grid_arg(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((label, dir)) => (label.to_string(), PathBuf::from(dir)),
        None => ("grid".to_string(), PathBuf::from(s)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    let mut cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Run { out } => {
            if let Some(o) = out {
                cfg.output = o.clone();
            }
            let summary = pipeline::cmd_run(&cfg)?;
            for s in &summary.stages {
                println!("{:<14} {:>8} ms  {}", s.stage, s.wall_clock_ms, &s.output_hash[..16]);
            }
            for (label, r) in &summary.metrics {
                println!("{label}: {}", r.summary());
            }
            println!("output: {}", summary.layout.root.display());
        }
        Command::Synth { out } => report(pipeline::cmd_synth(&cfg, out)?),
        Command::Geometry { bundle, out } => report(pipeline::cmd_geometry(&cfg, bundle, out)?),
        Command::Generate { bundle, coarse, out } => report(pipeline::cmd_generate(&cfg, bundle, coarse, out)?),
        Command::Fit { bundle, coarse, grid, out } => report(pipeline::cmd_fit(&cfg, bundle, coarse, grid, out)?),
        Command::Render { checkpoint, trajectory, times, out } => {
            let times = if times.is_empty() { (0..cfg.frames).map(|t| t as f64).collect() } else { times.clone() };
            report(pipeline::cmd_render(&cfg, checkpoint, trajectory, &times, out)?)
        }
        Command::Metrics { grids, truth, masks, bundle, out } => {
            let parsed: Vec<(String, PathBuf)> = grids.iter().map(|g| parse_grid_arg(g)).collect();
            let refs: Vec<(&str, &Path)> = parsed.iter().map(|(l, p)| (l.as_str(), p.as_path())).collect();
            let (rec, reports) = pipeline::cmd_metrics(&cfg, &refs, truth, masks.as_deref(), bundle.as_deref(), out)?;
            for (label, r) in &reports {
                println!("{label}: {}", r.summary());
            }
            report(rec);
        }
        Command::Config => print!("{}", cfg.to_kv().to_text()),
    }
    Ok(())
}

fn report(rec: pipeline::StageRecord) {
    println!("{}: {} ms, output {}", rec.stage, rec.wall_clock_ms, rec.output_hash);
}
