use std::process::ExitCode;

use clap::Parser;
use immc::cli::{is_usage_error, run, Cli, Output};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut stdout, mut stderr) = (std::io::stdout().lock(), std::io::stderr());
    let mut out = Output { json: cli.json, stdout: &mut stdout, stderr: &mut stderr };
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
