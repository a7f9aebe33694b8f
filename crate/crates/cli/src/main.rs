use clap::{Parser, Subcommand};
use paretoflow_cli::config::{self, Command};
use paretoflow_cli::experiments::{run_command, RunError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "paretoflow", version, about = "Preference-conditioned GFlowNets for multi-objective optimization")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run an experiment.
    Run {
        #[arg(value_enum)]
        command: Command,
        /// TOML config, or a previous run's manifest.json.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replaces the configured seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted key=value, applied after the file. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Continue mobo seeds from their checkpoints in the output directory.
        #[arg(long)]
        resume: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Action::Run {
        command,
        config: path,
        seed,
        out,
        overrides,
        resume,
    } = Cli::parse().action;
    let result = (|| -> Result<(), RunError> {
        let mut cfg = config::load(path.as_deref(), &overrides)?;
        if let Some(s) = seed {
            cfg.seeds = vec![s];
        }
        if out.is_some() {
            cfg.out = out;
        }
        let dir = cfg
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(command.name()));
        run_command(command, &cfg, &dir, resume)?;
        log::info!("wrote {}", dir.display());
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
