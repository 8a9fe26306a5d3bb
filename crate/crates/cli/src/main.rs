//! `navfeat` command-line driver.

mod common;
mod config;
mod error;
mod evaluate;
mod extract;
mod pair;
mod preprocess;
mod preview;
mod report;
mod tune;

use clap::{Args, Parser, Subcommand};
use config::{ObjectiveKind, PipelineConfig, Preset};
use error::{CliError, CliResult};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "navfeat", version, about = "Feature-matching evaluation toolkit for asteroid imagery")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// More log output; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw images to screened 8-bit PNGs.
    Preprocess {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Build image pairs with dense correspondences.
    Pair {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Synthetic homography pairs per image instead of real pairs.
        #[arg(long)]
        synthetic: Option<usize>,
    },
    /// Write augmented samples for visual inspection.
    AugmentPreview {
        /// Pair manifest; augments pairs.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Image directory; augments single images when no manifest is given.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Write baseline dense feature maps (DFM1) for every pyramid level.
    Extract {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Match, score and estimate poses for every pair in a manifest.
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory of DFM1 maps named after the images.
        #[arg(long)]
        features_dir: Option<PathBuf>,
        /// Use the built-in baseline extractor.
        #[arg(long)]
        baseline: bool,
        /// Ground-truth descriptor self-test.
        #[arg(long)]
        oracle: bool,
    },
    /// Hyperparameter search with ASHA and Bayesian optimization.
    Tune {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, value_enum)]
        objective: Option<ObjectiveKind>,
        /// Validation pairs for the pipeline-eval objective.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Continue from the search log in the output directory.
        #[arg(long)]
        resume: bool,
        /// Random configurations instead of Bayesian optimization.
        #[arg(long)]
        random: bool,
    },
    /// Combine evaluation outputs into one table and plotting CSVs.
    Report {
        /// Evaluation output directories.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn merge(cfg: &mut PipelineConfig, g: &GlobalArgs) {
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &g.output {
        cfg.paths.output = Some(o.clone());
    }
}

fn set(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if let Some(p) = flag {
        *slot = Some(p.clone());
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = PipelineConfig::load(cli.global.config.as_deref())?;
    merge(&mut cfg, &cli.global);
    match &cli.command {
        Command::Preprocess { input } | Command::Pair { input, .. } => set(&mut cfg.paths.input, input),
        Command::AugmentPreview { manifest, input, .. } | Command::Extract { input, manifest } => {
            set(&mut cfg.paths.input, input);
            set(&mut cfg.paths.manifest, manifest);
        }
        Command::Evaluate { manifest, features_dir, .. } => {
            set(&mut cfg.paths.manifest, manifest);
            set(&mut cfg.paths.features_dir, features_dir);
        }
        Command::Tune { preset, objective, manifest, trials, .. } => {
            set(&mut cfg.paths.manifest, manifest);
            if preset.is_some() {
                cfg.tune.preset = *preset;
            }
            if let Some(o) = objective {
                cfg.tune.objective = *o;
            }
            if let Some(t) = trials {
                cfg.tune.asha.total_trials = *t;
            }
        }
        Command::Report { .. } => {}
    }
    if let Command::Pair { synthetic: Some(n), .. } = &cli.command {
        cfg.pairing.synthetic_pairs = *n;
    }
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build_global()
        .map_err(|e| CliError::runtime(e.to_string()))?;

    match cli.command {
        Command::Preprocess { .. } => preprocess::run(&cfg),
        Command::Pair { .. } => pair::run(&cfg),
        Command::AugmentPreview { count, .. } => preview::run(&cfg, count),
        Command::Extract { .. } => extract::run(&cfg),
        Command::Evaluate { baseline, oracle, .. } => evaluate::run(&cfg, baseline, oracle),
        Command::Tune { resume, random, .. } => tune::run(&cfg, resume, random),
        Command::Report { inputs } => report::run(&cfg, &inputs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
