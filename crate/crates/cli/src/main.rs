use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use sdfmap_cli::config::{self, PipelineConfig};
use sdfmap_cli::{experiments, stages, CliError};

/// Reconstruct LiDAR obstacle scenes as learned signed distance fields.
#[derive(Parser)]
#[command(name = "sdfmap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file, or a manifest from a previous run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Override every seed in the config with values derived from this one.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for experiment sweeps (0 = all available).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan an analytic scene into a point cloud.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scene description JSON.
        #[arg(long)]
        scene: PathBuf,
    },
    /// Filter a raw cloud: classes, scene-change gate, ground split.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Input cloud (.xyz ASCII or .bin packed records).
        #[arg(long)]
        cloud: PathBuf,
        /// Sidecar class labels, one integer per point.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Previous static cloud for the scene-change gate.
        #[arg(long)]
        prev: Option<PathBuf>,
    },
    /// Build a labeled training dataset from an obstacle cloud.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cloud: PathBuf,
    },
    /// Train the distance-field model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Score a checkpoint against the scene oracle and/or dataset labels.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Extract the zero level set as an OBJ/PLY mesh.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render a bird's-eye slice as PGM + CSV.
    Slice {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train 40 models over depth x skip connections.
    SweepDepth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Uniform vs gaussian ray sampling, with confidence scatters.
    CompareAugment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Plain network vs Fourier-feature network.
    CompareEncoder {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => config::load_config(path)?,
        None => PipelineConfig::default().resolve()?,
    };
    if let Some(seed) = common.seed {
        config.override_seed(seed);
    }
    if let Some(threads) = common.threads {
        config.experiment.threads = threads;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, scene } => {
            let config = load(&common)?;
            stages::simulate(&scene, &config, &common.out)?;
        }
        Command::Ingest {
            common,
            cloud,
            labels,
            prev,
        } => {
            let config = load(&common)?;
            stages::ingest(
                &cloud,
                labels.as_deref(),
                prev.as_deref(),
                &config,
                &common.out,
            )?;
        }
        Command::Augment { common, cloud } => {
            let config = load(&common)?;
            stages::augment(&cloud, &config, &common.out)?;
        }
        Command::Train { common, dataset } => {
            let config = load(&common)?;
            stages::train(&dataset, &config, &common.out)?;
        }
        Command::Eval {
            common,
            checkpoint,
            scene,
            dataset,
        } => {
            let config = load(&common)?;
            stages::eval(
                &checkpoint,
                scene.as_deref(),
                dataset.as_deref(),
                &config,
                &common.out,
            )?;
        }
        Command::Extract { common, checkpoint } => {
            let config = load(&common)?;
            stages::extract(&checkpoint, &config, &common.out)?;
        }
        Command::Slice { common, checkpoint } => {
            let config = load(&common)?;
            stages::slice(&checkpoint, &config, &common.out)?;
        }
        Command::SweepDepth {
            common,
            scene,
            cloud,
        } => {
            let config = load(&common)?;
            experiments::sweep_depth(scene.as_deref(), cloud.as_deref(), &config, &common.out)?;
        }
        Command::CompareAugment {
            common,
            scene,
            cloud,
        } => {
            let config = load(&common)?;
            experiments::compare_augmentation(
                scene.as_deref(),
                cloud.as_deref(),
                &config,
                &common.out,
            )?;
        }
        Command::CompareEncoder {
            common,
            scene,
            cloud,
        } => {
            let config = load(&common)?;
            experiments::compare_encoder(scene.as_deref(), cloud.as_deref(), &config, &common.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes; anything else is bad usage.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
