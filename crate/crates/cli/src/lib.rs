//! Command-line harness: SEQM matrix files, artifact directories, CSV reports
//! and the `semeq` subcommands.

pub mod args;
pub mod commands;
pub mod config;
pub mod format;
pub mod report;
pub mod seeds;
pub mod store;

use anyhow::{Context, Result};

use crate::args::{Cli, Command};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SEMEQ_THREADS";

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = thread_pool()?;
    let seed = cli.seed.unwrap_or(0);
    pool.install(|| match &cli.command {
        Command::GenData(a) => commands::gen_data(seed, a),
        Command::TrainAgent(a) => commands::train_agent(seed, a),
        Command::Anchors(a) => commands::anchors(seed, a),
        Command::Equalize(a) => commands::equalize_one(seed, a),
        Command::Evaluate(a) => commands::evaluate(seed, a),
        Command::Sweep(a) => commands::sweep(cli.seed, a),
    })
}
