use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "excursion-lab", version, about = "Run the excursion-lab experiment catalog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments selected by a TOML config.
    Run { config: PathBuf },
    /// Print the experiment catalog.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => excursion_lab_cli::execute_config(&config),
        Command::List => {
            print!("{}", excursion_lab_cli::catalog());
            excursion_lab_cli::EXIT_OK
        }
    };
    ExitCode::from(code as u8)
}
