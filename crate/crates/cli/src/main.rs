use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poisonlearn_cli::commands::{
    cmd_attack, cmd_check_gradients, cmd_eval, cmd_hyperlearn, cmd_synth_demo, CheckOptions,
};
use poisonlearn_cli::config::{load_config, Overrides};
use poisonlearn_cli::CliResult;

/// Worst-case data poisoning with joint regularization-hyperparameter
/// learning: attack runner, hyperparameter learner, demos and checks.
#[derive(Parser)]
#[command(name = "poisonlearn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Key-value config file (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset supplying defaults (see the README for the list).
    #[arg(long)]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel workers for repetitions x modes.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the poisoning attack across the configured regularization modes.
    Attack(CommonArgs),
    /// Learn λ on the configured task (hypergradient descent or CV).
    Hyperlearn(CommonArgs),
    /// Single-point plane-sweep demo on the synthetic Gaussian task.
    SynthDemo(CommonArgs),
    /// Clean-training baseline per regularization mode.
    Eval(CommonArgs),
    /// Verify the hypergradient engines against finite differences.
    CheckGradients {
        #[command(flatten)]
        common: CommonArgs,
        /// Negative control: corrupt one component so the suite must fail.
        #[arg(long)]
        corrupt: bool,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let common = match &cli.command {
        Command::Attack(c)
        | Command::Hyperlearn(c)
        | Command::SynthDemo(c)
        | Command::Eval(c)
        | Command::CheckGradients { common: c, .. } => c,
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        jobs: common.jobs,
    };

    match &cli.command {
        Command::CheckGradients { common, corrupt } => {
            let options = CheckOptions {
                seed: common.seed.unwrap_or(0),
                corrupt: *corrupt,
            };
            cmd_check_gradients(&options)
        }
        _ => {
            let config = load_config(common.config.as_deref(), common.preset.as_deref(), &overrides)?;
            let out = match &cli.command {
                Command::Attack(_) => cmd_attack(&config)?,
                Command::Hyperlearn(_) => cmd_hyperlearn(&config)?,
                Command::SynthDemo(_) => cmd_synth_demo(&config)?,
                Command::Eval(_) => cmd_eval(&config)?,
                Command::CheckGradients { .. } => unreachable!(),
            };
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
