//! `advrank` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
//! failure during training.

use std::path::PathBuf;
use std::process::ExitCode;

use advrank::data::SplitName;
use advrank::pipeline::{cmd_eval, cmd_experiment, cmd_generate, cmd_train, ExperimentConfig};
use advrank::Result;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "advrank", version, about = "Adversarial cross-domain regularization for neural rankers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset and its manifest.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train one model and checkpoint it after every epoch.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on telescoped pools.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to checkpoint.bin in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Overrides pool_k from the config.
        #[arg(long)]
        pool_k: Option<usize>,
        /// Baseline metrics JSON to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Train and compare λ = 0 and λ > 0 for every held-out domain.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Dev,
    Test,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config } => {
            let out = cmd_generate(&ExperimentConfig::load(&config)?)?;
            println!("wrote {}", out.data.display());
            println!("wrote {}", out.manifest.display());
        }
        Command::Train { config, resume } => {
            let out = cmd_train(&ExperimentConfig::load(&config)?, resume)?;
            for e in &out.state.log {
                println!(
                    "epoch {:>3}  loss {:.5}  dev P@1 {:.4}  dev MRR {:.4}  disc acc {:.3}",
                    e.epoch, e.train_loss, e.dev_p1, e.dev_mrr, e.disc_acc
                );
            }
            println!("best epoch {}", out.state.best_epoch());
            println!("wrote {}", out.checkpoint.display());
        }
        Command::Eval { config, checkpoint, split, pool_k, compare } => {
            let split = match split {
                Split::Dev => SplitName::Dev,
                Split::Test => SplitName::Test,
            };
            let cfg = ExperimentConfig::load(&config)?;
            let out = cmd_eval(&cfg, checkpoint.as_deref(), split, pool_k, compare.as_deref())?;
            println!(
                "P@1 {:.4}  MRR {:.4}  queries {}  excluded {}",
                out.report.p_at_1, out.report.mrr, out.report.n_queries, out.report.n_excluded
            );
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Experiment { config } => {
            let out = cmd_experiment(&ExperimentConfig::load(&config)?)?;
            print!("{}", std::fs::read_to_string(&out.text).unwrap_or_default());
            println!("wrote {}", out.json.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
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
