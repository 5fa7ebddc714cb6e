//! Command-line flags and the JSON config file that mirrors them.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use laglan_core::campaign::RegimeSpec;
use laglan_core::inference::EtaRule;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "laglan",
    version,
    about = "Lead-lag likelihood laboratory: simulation, verification and estimation campaigns"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw replications of the observation vector and dump them.
    Simulate(Flags),
    /// Spectral limits, lemma diagnostics and Hellinger checks.
    Verify(Flags),
    /// Monte Carlo campaign of the quasi-likelihood estimators.
    Estimate(Flags),
    /// Limit-experiment moments and the efficiency ratio sweep.
    Limit(Flags),
    /// Rates, lag domain and information constants of one model.
    Constants(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Verify(_) => "verify",
            Command::Estimate(_) => "estimate",
            Command::Limit(_) => "limit",
            Command::Constants(_) => "constants",
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Command::Simulate(f)
            | Command::Verify(f)
            | Command::Estimate(f)
            | Command::Limit(f)
            | Command::Constants(f) => f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Exact,
    Surrogate,
}

/// Flags shared by all subcommands; each subcommand reads the ones it needs.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// JSON document with any of the flags below (flags take precedence).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Observations per series.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated sizes for convergence sweeps.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// zero | finite:<gamma> | infinite:<v>
    #[arg(long)]
    pub regime: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub c_true: Option<f64>,
    /// default | fill_domain | fixed:<eta>
    #[arg(long)]
    pub eta_rule: Option<String>,
    /// Replication count.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Main tolerance of the command's checks.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Model drawn by `simulate`.
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Flags {
    /// Flags over the config file named by `--config`, if any.
    pub fn resolve(&self) -> Result<Flags, CliError> {
        let Some(path) = &self.config else {
            return Ok(self.clone());
        };
        let file = load_config(path)?;
        Ok(Flags {
            config: None,
            n: self.n.or(file.n),
            n_grid: self.n_grid.clone().or(file.n_grid),
            rho: self.rho.or(file.rho),
            regime: self.regime.clone().or(file.regime),
            theta: self.theta.or(file.theta),
            c_true: self.c_true.or(file.c_true),
            eta_rule: self.eta_rule.clone().or(file.eta_rule),
            m: self.m.or(file.m),
            seed: self.seed.or(file.seed),
            tol: self.tol.or(file.tol),
            kind: self.kind.or(file.kind),
            out: self.out.clone().or(file.out),
            format: self.format.or(file.format),
        })
    }

    pub fn regime(&self) -> Result<Option<RegimeSpec>, CliError> {
        self.regime
            .as_deref()
            .map(RegimeSpec::from_str)
            .transpose()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn eta_rule(&self) -> Result<Option<EtaRule>, CliError> {
        self.eta_rule.as_deref().map(parse_eta_rule).transpose()
    }
}

fn load_config(path: &Path) -> Result<Flags, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

pub fn parse_eta_rule(s: &str) -> Result<EtaRule, CliError> {
    match s.trim() {
        "default" => Ok(EtaRule::Default),
        "fill_domain" => Ok(EtaRule::FillDomain),
        other => other
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
            .map(EtaRule::Fixed)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "eta rule must be default, fill_domain or fixed:<eta>, got {other:?}"
                ))
            }),
    }
}
