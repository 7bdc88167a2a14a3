//! `ccnp-lab`: train, evaluate, and probe the contrastive conditional
//! neural-process model family on synthetic regression tasks.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod data;

use commands::DatagenArgs;

#[derive(Parser)]
#[command(name = "ccnp-lab", version, about = "Contrastive conditional neural process lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train all configured variants and seeds, then evaluate and tabulate.
    Run {
        /// Experiment config (.toml or .json).
        #[arg(long)]
        config: PathBuf,
        /// Output root; results land in <out>/<experiment-name>/.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Number of parallel training workers.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Generate a dataset and store it in the cache format.
    Datagen {
        /// 1D function family: sinusoid|exponential|oscillator|line.
        #[arg(long)]
        family: Option<String>,
        /// GP kernel: rbf|periodic|noisy_matern.
        #[arg(long)]
        kernel: Option<String>,
        /// Lotka-Volterra mode: greek|population.
        #[arg(long)]
        lv: Option<String>,
        /// Number of instantiations to generate.
        #[arg(long)]
        count: usize,
        /// Points per instantiation (family and GP specs).
        #[arg(long, default_value_t = 64)]
        n_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output base path (writes <out>.bin and <out>.meta.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved checkpoint on the experiment's test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Root used to resolve the dataset cache.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run the coefficient-inference probe on a frozen checkpoint.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Root used to resolve the dataset cache.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Sweep the contrastive projection dimension (CCNP) and report probe MSE.
    SweepProj {
        #[arg(long)]
        config: PathBuf,
        /// Root used to resolve the dataset cache.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Projection dimensions to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32, 64, 128])]
        dims: Vec<usize>,
    },
    /// Verify analytic gradients against finite differences for every op.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random shape/value cases per op.
        #[arg(long, default_value_t = 10)]
        cases: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, jobs } => commands::cmd_run(&config, &out, jobs),
        Command::Datagen {
            family,
            kernel,
            lv,
            count,
            n_points,
            seed,
            out,
        } => commands::cmd_datagen(&DatagenArgs {
            family,
            kernel,
            lv,
            count,
            n_points,
            seed,
            out,
        }),
        Command::Eval {
            checkpoint,
            config,
            out,
        } => commands::cmd_eval(&checkpoint, &config, &out),
        Command::Probe {
            checkpoint,
            config,
            out,
        } => commands::cmd_probe(&checkpoint, &config, &out),
        Command::SweepProj { config, out, dims } => {
            commands::cmd_sweep_proj(&config, &out, &dims)
        }
        Command::Gradcheck { seed, cases } => commands::cmd_gradcheck(seed, cases),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
