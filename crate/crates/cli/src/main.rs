use std::process::ExitCode;

use clap::Parser;
use sectsum_cli::{run, Cli};
use sectsum_core::scaling::TrackingAllocator;

// Lets `bench` report peak allocation.
#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
