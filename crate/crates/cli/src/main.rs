mod cmd;
mod config;
mod data;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Loaded;

#[derive(Parser)]
#[command(
    name = "geoprobe",
    version,
    about = "Train and evaluate geometric probes on activation dumps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent tasks.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (default: `out` next to the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Select unisemic words and split them into category-balanced sets.
    BuildDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Mean-pool frame activations over labelled spans.
    Pool {
        #[command(flatten)]
        common: Common,
    },
    /// Train one probe per activation file.
    Train {
        #[command(flatten)]
        common: Common,
        /// Search the learning-rate grid before the final fit.
        #[arg(long)]
        grid: bool,
        /// Skip layers whose probe artifacts already exist.
        #[arg(long)]
        resume: bool,
    },
    /// Score trained probes on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Also score random Gaussian probes of the same shape.
        #[arg(long)]
        baseline: bool,
    },
    /// Fit emergence curves across checkpoints.
    Emergence {
        #[command(flatten)]
        common: Common,
    },
    /// Draw a 2-D probe projection as SVG.
    Visualize {
        #[command(flatten)]
        common: Common,
        /// Overlay minimum-spanning-tree edges.
        #[arg(long)]
        tree: bool,
    },
    /// Compare semantic and syntactic probes: alignment, unit norms, encoding.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
}

/// Error carrying a process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn partial(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(error: E) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }
}

fn load(c: &Common) -> Result<Loaded, Failure> {
    let l = Loaded::load(&c.config, c.seed, c.jobs, c.out.as_deref())?;
    let threads = l.config.jobs.unwrap_or(1);
    // a second build in the same process (tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(l)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::BuildDataset { common } => cmd::dataset::run(&load(&common)?),
        Command::Pool { common } => cmd::pool::run(&load(&common)?),
        Command::Train {
            common,
            grid,
            resume,
        } => cmd::train::run(&load(&common)?, grid, resume),
        Command::Eval { common, baseline } => cmd::eval::run(&load(&common)?, baseline),
        Command::Emergence { common } => cmd::emergence::run(&load(&common)?),
        Command::Visualize { common, tree } => cmd::visualize::run(&load(&common)?, tree),
        Command::Analyze { common } => cmd::analyze::run(&load(&common)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
