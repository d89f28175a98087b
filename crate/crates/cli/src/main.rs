use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wgsef_cli::bench::{cmd_bench_prox, cmd_prox_selftest, DEFAULT_SIZES};
use wgsef_cli::eval::cmd_eval;
use wgsef_cli::plot::cmd_plot;
use wgsef_cli::{cmd_train, CliError, TrainOptions};

#[derive(Parser)]
#[command(name = "wgsef", version, about = "Group-sparse training with the weighted group sparse envelope")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write zero wall-clock times so reruns produce identical files.
        #[arg(long)]
        deterministic: bool,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model on the config's evaluation split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Parameter file; defaults to OUT/model.wgsf.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized prox and envelope property suites.
    ProxSelftest {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        deterministic: bool,
    },
    /// Time the prox across problem sizes and fit the log-log slope.
    BenchProx {
        /// Comma-separated sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        deterministic: bool,
    },
    /// Render sparsity and error curves from a metrics.csv to SVG.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seed, deterministic, out } => {
            let report = cmd_train(&config, &TrainOptions { seed, deterministic, out })?;
            if let Some(last) = &report.summary.final_metrics {
                println!(
                    "epoch {} loss {:.6} error {:.3}% sparsity {:.2}% FLOPs {:.2}%",
                    last.epoch, last.loss, last.val_error, last.group_sparsity, last.flops_ratio
                );
            }
            println!("outputs in {}", report.out_dir.display());
        }
        Command::Eval { config, model, seed, deterministic: _, out } => {
            let report = cmd_eval(&config, model.as_deref(), out.as_deref(), seed)?;
            println!("{report}");
        }
        Command::ProxSelftest { trials, seed, deterministic: _ } => {
            cmd_prox_selftest(trials, seed)?;
        }
        Command::BenchProx { sizes, seed, deterministic: _ } => {
            cmd_bench_prox(&sizes.unwrap_or_else(|| DEFAULT_SIZES.to_vec()), seed)?;
        }
        Command::Plot { metrics, out } => cmd_plot(&metrics, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
