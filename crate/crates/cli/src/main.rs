use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "numeraire", version, about = "Simulate and verify numeraire minimum-time identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, run the selected checks and write reports.
    Run { config: PathBuf },
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
    /// Regenerate plot data from a finished run's output directory.
    Plots { report_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env = |k: &str| std::env::var(k).ok();
    let mut out = std::io::stdout();
    let code = match cli.command {
        Command::Run { config } => numeraire_cli::run_command(&config, env, &mut out),
        Command::Validate { config } => numeraire_cli::validate_command(&config, env, &mut out),
        Command::Plots { report_dir } => numeraire_cli::plots_command(&report_dir, &mut out),
    };
    ExitCode::from(code as u8)
}
