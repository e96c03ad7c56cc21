use std::process::ExitCode;

use clap::Parser;
use rulepatch_cli::cli::{run, Cli};
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out).expect("output serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = serde_json::json!({ "error": e.body() });
            eprintln!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
