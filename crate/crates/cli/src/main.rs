use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use semeq_cli::args::Cli;

/// Usage line of the subcommand named on the command line, or of the tool.
fn usage() -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let sub = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    match sub.and_then(|s| cmd.find_subcommand_mut(&s).cloned()) {
        Some(mut s) => s.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                eprintln!("\n{}", usage());
            }
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    match semeq_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
