//! Command-line driver: train models, generate adversarial test sets,
//! and sweep defender/attacker accuracy matrices. Exit codes: 0 success,
//! 1 configuration error, 2 runtime or numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use datagrad::error::Error;

use config::{Command as Cmd, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "datagrad",
    about = "Train rectifier networks with an input-gradient penalty and measure adversarial robustness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file with `key = value` lines; flags override its keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Training variant: rect, l1, l2, dgl1, dgl2, mt, mt_dgl1, mt_dgl2.
    #[arg(long)]
    mode: Option<String>,

    /// Weight-initialization and training seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Learning rate.
    #[arg(long)]
    eta: Option<f64>,

    /// Input-gradient penalty weight (datagrad modes).
    #[arg(long)]
    lambda1: Option<f64>,

    /// Finite-difference step t used inside training (datagrad modes).
    #[arg(long = "fd-step")]
    fd_step: Option<f64>,

    /// Auxiliary-task weight (multi-task modes).
    #[arg(long)]
    gamma: Option<f64>,

    /// Comma-separated attack magnitudes, e.g. 0,0.005,0.01,0.05,0.1.
    #[arg(long = "phi-grid", value_name = "LIST")]
    phi_grid: Option<String>,

    /// Output directory for checkpoints, logs, and reports.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,

    /// Mini-batch size.
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            mode: self.mode.clone(),
            seed: self.seed,
            eta: self.eta,
            lambda1: self.lambda1,
            fd_step: self.fd_step,
            gamma: self.gamma,
            phi_grid: self.phi_grid.clone(),
            out: self.out.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Subcommand)]
enum Commands {
    /// Train one model and save the best-validation checkpoint.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate one adversarial test set from a trained attacker.
    Attack {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint of the model whose gradients drive the noise.
        #[arg(long, value_name = "CKPT")]
        attacker: PathBuf,
        /// Attack magnitude.
        #[arg(long)]
        phi: f64,
    },
    /// Evaluate defender checkpoints against attacker checkpoints over
    /// the phi grid and write a CSV report.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Defender checkpoint (repeatable).
        #[arg(long = "defender", value_name = "CKPT")]
        defenders: Vec<PathBuf>,
        /// Attacker checkpoint (repeatable).
        #[arg(long = "attacker", value_name = "CKPT")]
        attackers: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> datagrad::Result<()> {
    match cli.command {
        Commands::Train { common } => {
            let run = RunConfig::load(Cmd::Train, common.config.as_deref(), &common.overrides())?;
            commands::cmd_train(&run)
        }
        Commands::Attack { common, attacker, phi } => {
            let run = RunConfig::load(Cmd::Attack, common.config.as_deref(), &common.overrides())?;
            commands::cmd_attack(&run, &attacker, phi)
        }
        Commands::Sweep { common, defenders, attackers } => {
            let run = RunConfig::load(Cmd::Sweep, common.config.as_deref(), &common.overrides())?;
            commands::cmd_sweep(&run, &defenders, &attackers)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; anything else is a
            // configuration problem.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
