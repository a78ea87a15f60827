#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;
mod svg;

use clap::Parser;

/// Closed orbits, period-doubling cascades and invariant manifolds of
/// x' = y, y' = z, z' = x^3 - a^2 x - y - b z.
#[derive(Debug, Parser)]
#[command(name = "silnikov", version)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() {
    let cli = Cli::parse();
    let code = commands::run(cli.command).unwrap_or_else(|e| {
        eprintln!("silnikov: {e}");
        e.exit_code()
    });
    std::process::exit(code);
}
