//! Command-line front end: `generate`, `optimize`, `sweep` and `h2`.
//!
//! Settings resolve in three layers: a named preset, then an optional TOML
//! file (`--config` or `H2DAMP_CONFIG`), then individual flags.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
pub use commands::Outcome;
pub use config::{Preset, RunConfig, CONFIG_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_ORACLE_CAP: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "h2damp",
    version,
    about = "Optimize external damper gains on an interpolatory reduced model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured model as text files.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize gains for one damper configuration and print the report.
    Optimize {
        #[command(flatten)]
        run: RunArgs,
        /// Include wall-clock timings in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Optimize every damper configuration of a grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate H2 norms at given gains.
    H2 {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated gains; negative values are allowed.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        gains: Vec<f64>,
        /// Evaluate the surrogate built from the predetermined samples.
        #[arg(long)]
        surrogate: bool,
        /// Evaluate the dense full-order oracle.
        #[arg(long)]
        oracle: bool,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// ex1-paper, ex1-desk, ex2-paper or ex2-desk.
    #[arg(long, default_value = "ex1-desk")]
    pub preset: String,
    /// TOML overlay applied on top of the preset.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// ex1, ex2 or files.
    #[arg(long)]
    pub example: Option<String>,
    /// n for example 1, d for example 2.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub alpha_c: Option<f64>,
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Model directory for `--example files`.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// a (balanced truncation), b (inner IRKA) or c (dominant poles).
    #[arg(long)]
    pub strategy: Option<String>,
    /// predetermined or adaptive.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub it_max: Option<usize>,
    /// sym2IRKA shift-change tolerance.
    #[arg(long)]
    pub sym_tol: Option<f64>,
    #[arg(long)]
    pub tol_diff: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub tol_x: Option<f64>,
    #[arg(long)]
    pub tol_f: Option<f64>,
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// Optimizer start point, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub oracle_cap: Option<usize>,
    /// Run the full-order oracle alongside the reduced path.
    #[arg(long, conflicts_with = "no_oracle")]
    pub with_oracle: bool,
    #[arg(long)]
    pub no_oracle: bool,
    /// Write the JSON report or summary here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write sweep rows here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    /// Preset, then config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = self.preset.parse::<Preset>()?.config();
        if let Some(path) = &self.config {
            cfg = cfg.overlay_file(path)?;
        }
        if let Some(v) = &self.example {
            cfg.model.example = v.parse()?;
        }
        if let Some(v) = self.size {
            cfg.model.size = v;
        }
        if let Some(v) = self.alpha_c {
            cfg.model.alpha_c = v;
        }
        if let Some(v) = self.j {
            cfg.model.j = v;
        }
        if let Some(v) = self.k {
            cfg.model.k = v;
        }
        if let Some(v) = &self.model_dir {
            cfg.model.dir = Some(v.clone());
        }
        if let Some(v) = &self.strategy {
            cfg.reduction.strategy = v.parse()?;
        }
        if let Some(v) = &self.mode {
            cfg.sampling.mode = v.parse()?;
        }
        if let Some(v) = self.r {
            cfg.reduction.r = v;
        }
        if let Some(v) = self.it_max {
            cfg.reduction.it_max = v;
        }
        if let Some(v) = self.sym_tol {
            cfg.reduction.tol = v;
        }
        if let Some(v) = self.tol_diff {
            cfg.sampling.tol_diff = v;
        }
        if let Some(v) = self.max_outer {
            cfg.sampling.max_outer = v;
        }
        if let Some(v) = self.tol_x {
            cfg.optimizer.tol_x = v;
        }
        if let Some(v) = self.tol_f {
            cfg.optimizer.tol_f = v;
        }
        if let Some(v) = self.max_evals {
            cfg.optimizer.max_evals = Some(v);
        }
        if let Some(v) = &self.x0 {
            cfg.optimizer.x0 = v.clone();
        }
        if let Some(v) = self.oracle_cap {
            cfg.oracle.cap = v;
        }
        if self.with_oracle {
            cfg.oracle.enabled = true;
        }
        if self.no_oracle {
            cfg.oracle.enabled = false;
        }
        if let Some(v) = &self.json {
            cfg.output.json = Some(v.clone());
        }
        if let Some(v) = &self.csv {
            cfg.output.csv = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::OracleCapExceeded { .. } => EXIT_ORACLE_CAP,
        Error::NonConvergence(_) => EXIT_NONCONVERGENCE,
        Error::InvalidDimension(_)
        | Error::InvalidGain(_)
        | Error::InvalidInput(_)
        | Error::NotSymmetric { .. }
        | Error::NotPositiveDefinite(_)
        | Error::Parse { .. } => EXIT_VALIDATION,
        _ => EXIT_FAILURE,
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<Outcome> {
    match &cli.command {
        Command::Generate { run, out: dir } => {
            let mut cfg = run.resolve()?;
            if let Some(d) = dir {
                cfg.output.dir = Some(d.clone());
            }
            commands::generate(&cfg, out)
        }
        Command::Optimize { run, timings } => commands::optimize(&run.resolve()?, *timings, out),
        Command::Sweep { run } => commands::sweep(&run.resolve()?, out),
        Command::H2 {
            run,
            gains,
            surrogate,
            oracle,
        } => {
            let cfg = run.resolve()?;
            let (s, o) = match (*surrogate, *oracle) {
                (false, false) => (true, cfg.oracle.enabled),
                pair => pair,
            };
            commands::h2(&cfg, gains, s, o, out)
        }
    }
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::NonConverged) => {
            eprintln!("h2damp: finished without convergence");
            EXIT_NONCONVERGENCE
        }
        Err(e) => {
            eprintln!("h2damp: {e}");
            exit_code(&e)
        }
    }
}
