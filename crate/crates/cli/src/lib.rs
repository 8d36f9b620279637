//! `opsize` command-line driver: operator-size distributions, quench
//! variances, region recovery and OTOC statistics for spin chains, plus a
//! self-test suite.

pub mod commands;
pub mod config;
pub mod output;
pub mod selftest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const NUMERICAL: u8 = 2;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("numerical check failed: {0}")]
    Numerical(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Usage(_) | CliError::Io(..) => exit::USAGE,
        }
    }
}

impl From<opsize::Error> for CliError {
    fn from(e: opsize::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "opsize", version, about = "Operator size distributions from quench statistics")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML experiment config, layered over the preset.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Named parameter set (fig2-chaotic, fig2-integrable, fig5-xxz,
    /// fig5-xxz-u1, fig6-ising, fig6-ising-tfim).
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Master seed for every random draw.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Initial states per time point.
    #[arg(long, global = true, value_name = "M")]
    pub samples: Option<usize>,
    /// Output directory [default: out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, value_name = "INT")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Size distribution p_l(t) of the evolved observable and the random baseline.
    SizeDist,
    /// Sampled quench trajectories, their variance and the exact prediction.
    Variance,
    /// Region variances for every subset of R and the recovered p_R.
    Region {
        /// Comma-separated sites of R (0-based).
        #[arg(long, value_delimiter = ',')]
        sites: Option<Vec<usize>>,
        /// Also sample every subset variance.
        #[arg(long)]
        sampled: bool,
    },
    /// Infinite-temperature OTOC and the response-variance estimate.
    Otoc {
        /// Operator W, e.g. "X4".
        #[arg(long)]
        w: Option<String>,
        /// Operator V, e.g. "Z0".
        #[arg(long)]
        v: Option<String>,
        /// Fixed time of V.
        #[arg(long)]
        t1: Option<f64>,
    },
    /// Oracle and identity checks at small N; prints a JSON report.
    Selftest {
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<selftest::Fault>,
    },
}

/// Preset, then config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<config::Config, CliError> {
    let g = &cli.global;
    let mut c = config::load(g.preset.as_deref(), g.config.as_deref())?;
    if let Some(seed) = g.seed {
        c.seed = seed;
    }
    if let Some(m) = g.samples {
        c.sampling.samples = m;
    }
    if let Some(out) = &g.out {
        c.out = Some(out.clone());
    }
    match &cli.command {
        Command::Region { sites, sampled } => {
            if let Some(sites) = sites {
                c.region.sites = sites.clone();
            }
            c.region.sampled |= *sampled;
        }
        Command::Otoc { w, v, t1 } => {
            if let Some(w) = w {
                c.otoc.w = w.clone();
            }
            if let Some(v) = v {
                c.otoc.v = v.clone();
            }
            if let Some(t1) = t1 {
                c.otoc.t1 = *t1;
            }
        }
        _ => {}
    }
    c.validate()?;
    Ok(c)
}

/// Parses `args` and runs the command; returns the exit code. Messages go
/// to stdout/stderr.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("opsize: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Command::Selftest { inject_fault } = &cli.command {
        let report = selftest::run(*inject_fault)?;
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        if let Some(out) = &cli.global.out {
            output::prepare_dir(out)?;
            output::write_json(out, "selftest.json", &report)?;
        }
        return Ok(if report.passed { exit::OK } else { exit::NUMERICAL });
    }
    let config = resolve_config(cli)?;
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match &cli.command {
        Command::SizeDist => {
            commands::run_size_dist(&config, &out)?;
        }
        Command::Variance => {
            commands::run_variance(&config, &out)?;
        }
        Command::Region { .. } => {
            commands::run_region(&config, &out)?;
        }
        Command::Otoc { .. } => {
            commands::run_otoc(&config, &out)?;
        }
        Command::Selftest { .. } => unreachable!(),
    }
    eprintln!("opsize: wrote {}", out.display());
    Ok(exit::OK)
}
