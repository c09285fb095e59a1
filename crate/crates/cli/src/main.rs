//! `bsdelab`: configure and run solves, assumption checks, inequality
//! verifications, refinement studies and example audits from one JSON file.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cases;
mod check;
mod config;
mod error;
mod example;
mod ineq;
mod output;
mod solve;
mod study;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Command, RunConfig};
use error::AppError;
use output::Output;

#[derive(Parser)]
#[command(name = "bsdelab", version, about = "Monte Carlo laboratory for backward SDEs")]
struct Cli {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "BSDELAB_THREADS")]
    threads: Option<usize>,
}

fn fail(e: &AppError) -> ExitCode {
    eprintln!("bsdelab: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&AppError::Config("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&AppError::Config(format!("thread pool: {e}")));
        }
    }
    let cfg = match RunConfig::load(&cli.config).and_then(|c| c.validate(cli.command).map(|_| c)) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let mut out = match Output::create(&dir) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let outcome = match cli.command {
        Command::Solve => solve::run(&cfg, &mut out),
        Command::Check => check::run(&cfg, &mut out),
        Command::Ineq => ineq::run(&cfg, &mut out),
        Command::Study => study::run(&cfg, &mut out),
        Command::Example => example::run(&cfg, &mut out),
    };
    if let Err(e) = out.manifest(cli.command, &cfg, &outcome) {
        return fail(&e);
    }
    match outcome {
        Ok(()) => {
            println!("bsdelab {}: results in {}", cli.command.name(), out.dir().display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
