use std::process::ExitCode;

use clap::Parser;
use numbias_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("\nRun `numbias {} --help` for usage.", cli.command.name());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
