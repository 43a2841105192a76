use std::process::ExitCode;

use clap::Parser;
use mlp_lab::cli::{main_with, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(main_with(&cli) as u8)
}
