use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use lbm_equiv_cli::{cmd_analyze, cmd_run, cmd_verify, load_config, CliError, Output, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Write the equivalent-PDE report (viscosity coefficients and Λ slices).
    Analyze,
    /// Run the scheme and dump populations and conserved fields.
    Run,
    /// Run a refinement study or the viscometer.
    Verify,
}

/// Multiple-relaxation-time lattice Boltzmann runs, equivalent-equation
/// reports and convergence studies.
#[derive(Debug, Parser)]
#[command(name = "lbm-equiv", version)]
struct Cli {
    command: Command,
    /// TOML configuration; required for analyze and run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// prop3, prop4, prop5, prop6, viscosity or all.
    #[arg(long, default_value = "all")]
    study: String,
    /// Only errors are printed.
    #[arg(long)]
    quiet: bool,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = match (&cli.config, cli.command) {
        (Some(path), _) => load_config(path)?,
        (None, Command::Verify) => RunConfig::default(),
        (None, _) => return Err(CliError::Config("--config is required".into())),
    };
    let out = Output {
        dir: cli.out.clone(),
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Analyze => cmd_analyze(&config, &out).map(drop),
        Command::Run => cmd_run(&config, &out).map(drop),
        Command::Verify => cmd_verify(&config, &cli.study, &out).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
