use clap::Parser;

use mimpde::harness::cli::{execute, Cli};

fn main() {
    std::process::exit(execute(Cli::parse()));
}
