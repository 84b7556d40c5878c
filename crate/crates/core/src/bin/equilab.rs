use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equilab::runner::{exit_code, run, RunArgs};

#[derive(Parser)]
#[command(name = "equilab", version, about = "Projection, sum-product, focusing and flow experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Cmd::Run { config, seed, threads, out } = cli.cmd;
    match run(&RunArgs { config, seed, threads, out }) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
