use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use urbanmas::cli::{run, Cli, Env};
use urbanmas::Error;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = Env::system(Duration::from_secs(120)).and_then(|env| run(&cli, &env, &mut std::io::stdout()));
    match outcome {
        Ok(o) => ExitCode::from(o.exit_code() as u8),
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
