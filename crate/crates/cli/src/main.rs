use std::process::ExitCode;

use clap::Parser;
use poi_alias_cli::{log, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = format!("{:?}", cli.command).split('(').next().unwrap_or("").to_ascii_lowercase();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            log::error(&command, &[("error", chain.join(": "))]);
            ExitCode::FAILURE
        }
    }
}
