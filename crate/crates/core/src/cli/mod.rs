//! The `cohort` command-line tool: configuration, commands and reports.
//!
//! Exit codes are 0 on success, 2 for invalid input or configuration, 3 when
//! the problem is infeasible, 4 when the solver stops without converging and
//! 1 for anything else (I/O and the like).

mod commands;
mod config;
mod report;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineMethod;
use crate::error::{Error, Result};

pub use commands::{run_method, Context, MethodRun};
pub use config::{DatasetConfig, IdealConfig, NeymanSection, PercentValue, RunConfig, SolverConfig, SyntheticConfig};
pub use report::{ComparisonReport, ReportRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

/// Every method the tool can run: the four baselines and the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Psrs,
    Osrs,
    Ra,
    Wrs,
    Op,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Psrs, Method::Osrs, Method::Ra, Method::Wrs, Method::Op];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Psrs => "psrs",
            Method::Osrs => "osrs",
            Method::Ra => "ra",
            Method::Wrs => "wrs",
            Method::Op => "op",
        }
    }

    pub fn baseline(&self) -> Option<BaselineMethod> {
        match self {
            Method::Psrs => Some(BaselineMethod::Psrs),
            Method::Osrs => Some(BaselineMethod::Neyman),
            Method::Ra => Some(BaselineMethod::RankAggregation),
            Method::Wrs => Some(BaselineMethod::Wrs),
            Method::Op => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psrs" => Ok(Method::Psrs),
            "osrs" | "neyman" => Ok(Method::Osrs),
            "ra" | "rank" => Ok(Method::Ra),
            "wrs" => Ok(Method::Wrs),
            "op" | "optimizer" => Ok(Method::Op),
            other => Err(Error::Validation(format!("unknown method `{other}` (expected psrs, osrs, ra, wrs or op)"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.as_str().to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "cohort", version, about = "Select cohorts whose strata match an ideal distribution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Study configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// psrs, osrs, ra, wrs or op.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Lattice step for range enumeration, as a fraction.
    #[arg(long, global = true)]
    pub step: Option<f64>,
    /// Strata listed by `stratify`.
    #[arg(long, global = true, default_value_t = 10)]
    pub top: usize,
    /// Also draw the concrete cohort.
    #[arg(long, global = true)]
    pub select: bool,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Which named ideal of the config to use.
    #[arg(long, global = true)]
    pub ideal: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Summarize the strata and the joint initial distribution.
    Stratify,
    /// Write a synthetic population from the config's `synthetic` section.
    Generate,
    /// Run the optimizer.
    Solve,
    /// Run one baseline method.
    Baseline,
    /// Run every configured method against every ideal and write a report.
    Compare,
    /// Run a method and draw the cohort.
    Select,
    /// Re-check and re-render an existing comparison report.
    Report,
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    NotConverged,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) => EXIT_OTHER,
        e if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_OTHER,
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Validation("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(step) = cli.step {
        cfg.grid_step = step;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let method = cli.method.as_deref().map(Method::from_str).transpose()?;
    match cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Stratify => commands::summarize(&cfg, cli.top),
        Command::Solve => commands::single(&cfg, Method::Op, cli.ideal.as_deref(), cli.select),
        Command::Baseline => {
            let m = method.ok_or_else(|| Error::Validation("baseline needs --method".into()))?;
            if m == Method::Op {
                return Err(Error::Validation("`op` is not a baseline; use `solve`".into()));
            }
            commands::single(&cfg, m, cli.ideal.as_deref(), cli.select)
        }
        Command::Select => commands::single(&cfg, method.unwrap_or(Method::Op), cli.ideal.as_deref(), true),
        Command::Compare => commands::compare(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

/// Parses `args` (program name first), runs and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(Status::Done) => EXIT_OK,
        Ok(Status::NotConverged) => {
            eprintln!("warning: the solver did not converge; the best iterate was written");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
