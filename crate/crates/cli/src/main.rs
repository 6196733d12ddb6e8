use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use screwdesign_cli::commands::{
    cmd_curate, cmd_eval, cmd_interp, cmd_latent_map, cmd_optimize, cmd_synth, cmd_train, stage_dir,
};
use screwdesign_cli::config::{Config, Representation};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "screwdesign", version, about = "Motion-driven humanoid upper-body design")]
struct Cli {
    /// TOML configuration; command-line flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory (default: runs/<timestamp>/<stage>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MotionArgs {
    /// Motion clip: a BVH path or synthetic:<wave|chicken|swim>. Repeatable.
    #[arg(long = "motion")]
    motions: Vec<String>,
    /// Frames per synthetic clip.
    #[arg(long)]
    frames: Option<usize>,
    /// Keep every n-th frame.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic robot records.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Curate robot records into a feature matrix.
    Curate {
        /// Directory of robot record JSON files.
        #[arg(long)]
        robots: Option<PathBuf>,
        #[arg(long, value_enum)]
        rep: Option<RepArg>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train the autoencoder on a curated matrix.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..=3))]
        latent_dim: Option<u64>,
        #[arg(long)]
        iso_weight: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Search for the design minimizing the total objective.
    Optimize {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Search the feature vector directly (no decoder).
        #[arg(long)]
        raw_space: bool,
        #[arg(long, value_enum)]
        rep: Option<RepArg>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        master_seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        motion: MotionArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Score a saved design and print the objective report as JSON.
    Eval {
        /// Design file written by `optimize`.
        design: PathBuf,
        /// Joint-count weight.
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        motion: MotionArgs,
    },
    /// Encode and cluster the dataset; write CSV and SVG maps.
    LatentMap {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Decode a latent strip between two robots.
    Interp {
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RepArg {
    Screw,
    Dh,
}

impl From<RepArg> for Representation {
    fn from(r: RepArg) -> Self {
        match r {
            RepArg::Screw => Representation::Screw,
            RepArg::Dh => Representation::Dh,
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_motion(cfg: &mut Config, m: MotionArgs) {
    if !m.motions.is_empty() {
        cfg.motion.clips = m.motions;
    }
    set(&mut cfg.motion.synthetic_frames, m.frames);
    set(&mut cfg.motion.stride, m.stride);
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Synth { n, seed, out } => {
            set(&mut cfg.synth.n, n);
            set(&mut cfg.synth.seed, seed);
            let dir = stage_dir(&cfg, "synth", out.out.as_deref());
            let files = cmd_synth(&cfg, &dir)?;
            println!("wrote {} records to {}", files.len(), dir.join("robots").display());
        }
        Command::Curate { robots, rep, out } => {
            if robots.is_some() {
                cfg.paths.robots = robots;
            }
            set(&mut cfg.curate.rep, rep.map(Into::into));
            let dir = stage_dir(&cfg, "curate", out.out.as_deref());
            let o = cmd_curate(&cfg, &dir)?;
            for e in &o.set.report {
                for w in &e.warnings {
                    eprintln!("warning: {}: {w}", e.name);
                }
            }
            println!("curated {} robots into {}", o.set.names.len(), o.matrix.display());
        }
        Command::Train {
            dataset,
            latent_dim,
            iso_weight,
            seed,
            epochs,
            out,
        } => {
            if dataset.is_some() {
                cfg.paths.dataset = dataset;
            }
            set(&mut cfg.train.latent_dim, latent_dim.map(|d| d as usize));
            set(&mut cfg.train.iso_weight, iso_weight);
            set(&mut cfg.train.seed, seed);
            set(&mut cfg.train.epochs, epochs);
            let dir = stage_dir(&cfg, "train", out.out.as_deref());
            let o = cmd_train(&cfg, &dir)?;
            println!(
                "trained {} epochs, full-data MSE {:.6}; checkpoint {}",
                o.history.len(),
                o.final_mse,
                o.checkpoint.display()
            );
        }
        Command::Optimize {
            checkpoint,
            raw_space,
            rep,
            runs,
            master_seed,
            workers,
            motion,
            out,
        } => {
            if checkpoint.is_some() {
                cfg.paths.checkpoint = checkpoint;
            }
            cfg.optimize.raw_space |= raw_space;
            set(&mut cfg.optimize.rep, rep.map(Into::into));
            set(&mut cfg.optimize.runs, runs);
            set(&mut cfg.optimize.master_seed, master_seed);
            set(&mut cfg.optimize.workers, workers);
            apply_motion(&mut cfg, motion);
            let dir = stage_dir(&cfg, "optimize", out.out.as_deref());
            let o = cmd_optimize(&cfg, &dir)?;
            println!(
                "best-within-budget total objective over {} runs: {} (median {:.3}); logs in {}",
                o.summary.runs,
                o.summary.display(),
                o.summary.median,
                dir.display()
            );
        }
        Command::Eval { design, lambda, motion } => {
            set(&mut cfg.objective.joint_weight, lambda);
            apply_motion(&mut cfg, motion);
            let report = cmd_eval(&cfg, &design)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::LatentMap {
            checkpoint,
            dataset,
            k,
            out,
        } => {
            if checkpoint.is_some() {
                cfg.paths.checkpoint = checkpoint;
            }
            if dataset.is_some() {
                cfg.paths.dataset = dataset;
            }
            set(&mut cfg.latent.k, k);
            let dir = stage_dir(&cfg, "latent_map", out.out.as_deref());
            let (_, files) = cmd_latent_map(&cfg, &dir)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Interp {
            from,
            to,
            steps,
            checkpoint,
            dataset,
            out,
        } => {
            if checkpoint.is_some() {
                cfg.paths.checkpoint = checkpoint;
            }
            if dataset.is_some() {
                cfg.paths.dataset = dataset;
            }
            if from.is_some() {
                cfg.latent.from = from;
            }
            if to.is_some() {
                cfg.latent.to = to;
            }
            set(&mut cfg.latent.steps, steps);
            let dir = stage_dir(&cfg, "interp", out.out.as_deref());
            let path = cmd_interp(&cfg, &dir)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
