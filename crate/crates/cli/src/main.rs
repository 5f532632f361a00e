use std::process::ExitCode;

use clap::Parser;
use dirlab_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("DIRLAB_THREADS") {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => {
                eprintln!("error: DIRLAB_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
