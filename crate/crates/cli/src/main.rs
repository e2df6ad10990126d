//! Command-line front end: noise generation, the CCN hypothesis test, plain
//! training, SEAL, and post-hoc analysis, all driven by one JSON config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Context};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "labelnoise", version, about = "Instance-dependent label noise toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Top-level seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a noisy dataset (CCN or IDN) and its sidecar metadata.
    GenNoise(CommonArgs),
    /// Run the CCN hypothesis test and write the report.
    CcnTest {
        #[command(flatten)]
        common: CommonArgs,
        /// Use the bound and observed error from `hypothesis.offline`
        /// directly, without training.
        #[arg(long)]
        offline: bool,
    },
    /// Train with plain cross-entropy and write accuracy curves.
    Train(CommonArgs),
    /// Run SEAL iterations and write soft labels plus per-iteration metrics.
    Seal(CommonArgs),
    /// Compute histograms, trajectories, and CSR from saved artifacts.
    Analyze(CommonArgs),
}

type Action = fn(&Context) -> Result<(), CliError>;

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (common, action): (&CommonArgs, Action) = match &cli.command {
        Command::GenNoise(c) => (c, commands::gen_noise),
        Command::Train(c) => (c, commands::train),
        Command::Seal(c) => (c, commands::seal),
        Command::Analyze(c) => (c, commands::analyze),
        Command::CcnTest { common, offline } => {
            let config =
                ExperimentConfig::load(&common.config).map_err(CliError::Validation)?;
            let ctx = Context::new(config, common.out.clone(), common.seed)?;
            return commands::ccn_test(&ctx, *offline);
        }
    };
    let config = ExperimentConfig::load(&common.config).map_err(CliError::Validation)?;
    let ctx = Context::new(config, common.out.clone(), common.seed)?;
    action(&ctx)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
