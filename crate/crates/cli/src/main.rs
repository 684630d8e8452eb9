use std::process::ExitCode;

use clap::Parser;
use mlip_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MLIP_LOG", "warn")).init();
    match run(&cli) {
        Ok(out) => {
            if !cli.quiet {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&out.summary).expect("summary is valid JSON")
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
