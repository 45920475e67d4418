//! `cylscat` experiment driver.
//!
//! Exit codes: 0 success, 1 `verify` found a failing check, 2 bad
//! configuration or unwritable output, 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cylscat::End;

use commands::{Context, KappaArgs, Summary};
use config::{parse_h_list, ExperimentConfig};
use report::Outputs;
use verify::Suite;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Io(String),
    #[error("numerical error: {0}")]
    Numeric(cylscat::Error),
}

impl From<cylscat::Error> for CliError {
    fn from(e: cylscat::Error) -> Self {
        match e {
            cylscat::Error::InvalidModel(msg) => CliError::Config(msg),
            cylscat::Error::NotHourglass => CliError::Config("this command needs an hourglass profile".into()),
            other => CliError::Numeric(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cylscat", version, about = "Scattering on surfaces with cylindrical ends")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (falls back to CYLSCAT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated h values for sweeps.
    #[arg(long = "h", global = true, value_name = "LIST")]
    h_list: Option<String>,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classical scattering map of one boundary point.
    Kappa {
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        eta: Option<f64>,
        #[arg(long)]
        end: Option<End>,
    },
    /// Exit/trap labels over a boundary grid.
    Domain,
    /// Stationary scattering matrix per mode.
    Smatrix,
    /// Scattering matrix through the time-dependent route, compared with the stationary one.
    SmatrixProp,
    /// Eigenphases of the flux-normalized matrix.
    Phases,
    /// Trace functionals and eigenphase distribution over an h sweep.
    Equidist,
    /// Husimi centers of transported coherent states against the classical map.
    Coherent,
    /// Transmission/reflection bands of an hourglass.
    Dichotomy,
    /// Weighted resolvent norm over tau and h.
    Resolvent,
    /// Run an invariant suite; exit 1 if any check fails.
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kappa { .. } => "kappa",
            Command::Domain => "domain",
            Command::Smatrix => "smatrix",
            Command::SmatrixProp => "smatrix-prop",
            Command::Phases => "phases",
            Command::Equidist => "equidist",
            Command::Coherent => "coherent",
            Command::Dichotomy => "dichotomy",
            Command::Resolvent => "resolvent",
            Command::Verify { .. } => "verify",
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("CYLSCAT_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("CYLSCAT_THREADS must be a positive integer, got '{v}'"))),
        _ => Ok(None),
    }
}

fn setup_threads(n: Option<usize>) -> Result<(), CliError> {
    match n {
        Some(0) => Err(CliError::Config("thread count must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}"))),
        None => Ok(()),
    }
}

fn load_config(common: &Common, command: &Command) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&common.config, command) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Command::Verify { suite }) => {
            ExperimentConfig::preset(if *suite == Suite::Hourglass { "hourglass" } else { "bulge" })?
        }
        (None, _) => return Err(CliError::Config("--config is required for this command".into())),
    };
    if let Some(list) = &common.h_list {
        cfg.h_list = Some(parse_h_list(list)?);
    }
    for t in &common.tol {
        cfg.tolerances.apply_override(t)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Summary, CliError> {
    setup_threads(thread_count(cli.common.threads)?)?;
    let cfg = load_config(&cli.common, &cli.command)?;
    let model = cfg.model.build()?;
    let out = Outputs::new(&cli.common.out, cli.command.name(), &cfg.hash())?;
    let mut ctx = Context { cfg, model, out };
    match &cli.command {
        Command::Kappa { theta, eta, end } => {
            commands::kappa(&mut ctx, &KappaArgs { end: *end, theta: *theta, eta: *eta })
        }
        Command::Domain => commands::domain(&mut ctx),
        Command::Smatrix => commands::smatrix(&mut ctx),
        Command::SmatrixProp => commands::smatrix_prop(&mut ctx),
        Command::Phases => commands::phases(&mut ctx),
        Command::Equidist => commands::equidist(&mut ctx),
        Command::Coherent => commands::coherent(&mut ctx),
        Command::Dichotomy => commands::dichotomy(&mut ctx),
        Command::Resolvent => commands::resolvent(&mut ctx),
        Command::Verify { suite } => {
            let checks = verify::run(*suite, &ctx.cfg.tolerances)?;
            let rows: Vec<Vec<String>> = checks.iter().map(|c| c.row()).collect();
            ctx.out.table("verify.csv", &verify::COLUMNS, &rows)?;
            let mut s = Summary::default();
            for c in &checks {
                let tag = if c.pass { "ok" } else { "FAIL" };
                s.lines.push(format!("{tag:<4} [{}] {}: {:.3e} {}", c.suite, c.name, c.value, c.bound));
                if !c.pass {
                    s.failures.push(c.name.clone());
                }
            }
            Ok(s)
        }
    }
    .map(|mut s| {
        for p in ctx.out.written() {
            s.lines.push(format!("wrote {}", p.display()));
        }
        s
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let is_verify = matches!(cli.command, Command::Verify { .. });
    match run(cli) {
        Ok(summary) => {
            for l in &summary.lines {
                println!("{l}");
            }
            if is_verify && !summary.failures.is_empty() {
                eprintln!("verify: {} check(s) failed", summary.failures.len());
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cylscat: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
