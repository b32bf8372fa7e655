//! Command-line front end for `natlift-core`.
//!
//! Exit codes: 0 when every enforced check passes, 1 on a check failure,
//! 2 on usage, configuration or output errors.

pub mod commands;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use natlift_core::curvature::Family;

use crate::config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("output: {0}")]
    Output(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "natlift",
    version,
    about = "Curvature checks for natural lifted metrics on tangent bundles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the identity, connection, oracle and flatness checks.
    Verify(CommonArgs),
    /// Write sectional curvatures of sampled planes as CSV.
    Scan(CommonArgs),
    /// Project `family − family₀(k)` onto the ten-term tensor basis.
    Decompose(DecomposeArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (report for verify/decompose, CSV for scan).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `euclidean:<n>` or `sphere:2:<radius>`.
    #[arg(long)]
    pub base: Option<String>,
    /// `sasaki`, `cheeger-gromoll` or `theorem4`.
    #[arg(long)]
    pub preset: Option<String>,
    /// theorem4 α, e.g. `poly:1,1`, `const:2`, `ratio:1/1,2`.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// theorem4 β.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    /// theorem4 constant c₁.
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub planes: Option<usize>,
    #[arg(long)]
    pub oracle_step: Option<f64>,
    #[arg(long)]
    pub oracle_points: Option<usize>,
    /// Make the constant-curvature checks count towards the exit code.
    #[arg(long)]
    pub expect_constant_curvature: bool,
    /// Leave wall-clock timings out of the report.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Curvature family, e.g. `YXXY`.
    #[arg(long, default_value = "YXXY")]
    pub family: String,
    /// Curvature constant of the comparison tensor.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub k: f64,
}

impl CommonArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            base: self.base.clone(),
            preset: self.preset.clone(),
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            c: self.c,
            points: self.points,
            planes: self.planes,
            oracle_step: self.oracle_step,
            oracle_points: self.oracle_points,
            expect_constant_curvature: self.expect_constant_curvature,
            no_timings: self.no_timings,
        })?;
        Ok(cfg)
    }
}

fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Output(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_report(report: &report::Report, out: Option<&Path>) -> Result<u8, CliError> {
    let mut json = serde_json::to_string_pretty(report).map_err(|e| CliError::Output(e.to_string()))?;
    json.push('\n');
    emit(&json, out)?;
    eprint!("{}", report.summary());
    Ok(report.exit_code())
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Verify(a) => {
            let cfg = a.config()?;
            let out = a.out.clone().or_else(|| cfg.output.report.clone());
            emit_report(&commands::verify(cfg)?, out.as_deref())
        }
        Command::Scan(a) => {
            let cfg = a.config()?;
            let out = a.out.clone().or_else(|| cfg.output.csv.clone());
            match commands::scan(cfg)? {
                Ok(csv) => {
                    emit(&csv, out.as_deref())?;
                    Ok(0)
                }
                Err(msg) => {
                    eprintln!("scan failed: {msg}");
                    Ok(1)
                }
            }
        }
        Command::Decompose(a) => {
            let family: Family = a
                .family
                .parse()
                .map_err(|e| CliError::Usage(format!("--family: {e}")))?;
            let cfg = a.common.config()?;
            let out = a.common.out.clone().or_else(|| cfg.output.report.clone());
            emit_report(&commands::decompose(cfg, family, a.k)?, out.as_deref())
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("natlift: {e}");
            2
        }
    }
}
