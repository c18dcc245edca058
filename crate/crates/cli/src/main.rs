use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spdefind_cli::config::ExperimentConfig;
use spdefind_cli::pipeline;
use spdefind_core::Error;

/// Discover stochastic partial differential equations from ensemble data.
#[derive(Parser)]
#[command(name = "spdefind", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark ensemble into a ".fld" field file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the discovery pipeline on a field file.
    Discover {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Score discovered models against the preset ground truth.
    Evaluate {
        #[arg(long, value_name = "DIR")]
        models: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Chain simulate, discover and evaluate on the benchmark presets.
    RunPaper {
        /// One of: heat, allen-cahn, nagumo, all.
        #[arg(long)]
        case: String,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ensembles: Option<usize>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_) | Error::UnsupportedOrder { .. } => 2,
        Error::Io(_) | Error::Format { .. } => 4,
        _ => 3,
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("SPDEFIND_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> spdefind_core::Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            pipeline::cmd_simulate(&config, &out)?;
        }
        Command::Discover {
            data,
            config,
            out_dir,
        } => {
            let config = ExperimentConfig::load(&config)?;
            pipeline::cmd_discover(&data, &config, &out_dir)?;
        }
        Command::Evaluate {
            models,
            config,
            report,
        } => {
            let config = ExperimentConfig::load(&config)?;
            pipeline::cmd_evaluate(&models, &config, &report)?;
        }
        Command::RunPaper {
            case,
            out_dir,
            seed,
            ensembles,
        } => {
            pipeline::cmd_run_paper(&case, &out_dir, seed, ensembles)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
