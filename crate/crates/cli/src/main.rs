//! `laglan`: batch driver for simulation, verification, estimation and
//! limit-experiment campaigns.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a
//! computation breaks down, 2 on usage or precondition errors.

mod args;
mod output;

use std::process::ExitCode;

use clap::Parser;
use laglan_core::campaign::{
    constants_row, run_estimate, run_limit, run_verify, EstimateConfig, LimitConfig, RegimeSpec,
    VerifyConfig,
};
use laglan_core::inference::EtaRule;
use laglan_core::simulate::sample;
use laglan_core::{CovKind, LagError};
use serde::{Deserialize, Serialize};

use args::{Cli, Command, Flags, Format, Kind};
use output::{emit_document, emit_table, Sink};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or model preconditions.
    Usage(String),
    /// A numerical routine failed.
    Runtime(String),
}

impl From<LagError> for CliError {
    fn from(e: LagError) -> Self {
        match e {
            LagError::InvalidRho(_)
            | LagError::InvalidSpec(_)
            | LagError::LagOutOfDomain { .. }
            | LagError::DimensionMismatch { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n: usize,
    pub rho: f64,
    pub regime: RegimeSpec,
    pub theta: f64,
    pub kind: Kind,
    pub m: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsConfig {
    pub n: usize,
    pub rho: f64,
    pub regime: RegimeSpec,
    pub eta_rule: EtaRule,
}

fn positive_m(m: usize) -> Result<usize, CliError> {
    if m == 0 {
        Err(CliError::Usage(
            "replication count m must be positive".into(),
        ))
    } else {
        Ok(m)
    }
}

fn simulate(f: &Flags) -> Result<bool, CliError> {
    let cfg = SimulateConfig {
        n: f.n.unwrap_or(256),
        rho: f.rho.unwrap_or(0.5),
        regime: f.regime()?.unwrap_or(RegimeSpec::Zero),
        theta: f.theta.unwrap_or(0.0),
        kind: f.kind.unwrap_or(Kind::Exact),
        m: positive_m(f.m.unwrap_or(100))?,
        seed: f.seed.unwrap_or(7),
    };
    let spec = cfg.regime.model(cfg.n, cfg.rho)?.with_theta(cfg.theta);
    let kind = match cfg.kind {
        Kind::Exact => CovKind::ExactC,
        Kind::Surrogate => CovKind::SurrogateCtilde,
    };
    let batch = sample(&spec, kind, cfg.seed, cfg.m)?;
    let sink = Sink::new(f.out.as_deref())?;
    match f.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = sink.writer()?;
            output::write_config_comment(&mut w, &cfg)?;
            batch.write_csv(&mut w)?;
        }
        Format::Json => emit_document(&sink, "simulate", &cfg, &batch, true)?,
    }
    eprintln!(
        "simulate: {} replications of n = {} ({}, theta = {})",
        cfg.m, cfg.n, kind, cfg.theta
    );
    Ok(true)
}

fn verify(f: &Flags) -> Result<bool, CliError> {
    let mut cfg = VerifyConfig::default();
    if let Some(r) = f.regime()? {
        cfg.regimes = vec![r];
    }
    if let Some(rho) = f.rho {
        cfg.rho = rho;
    }
    if let Some(g) = &f.n_grid {
        if g.is_empty() || g.contains(&0) {
            return Err(CliError::Usage("n grid must hold positive sizes".into()));
        }
        cfg.n_grid = g.clone();
    }
    if let Some(n) = f.n {
        cfg.lemma_n = n;
    }
    if let Some(t) = f.tol {
        cfg.frobenius_tol = t;
    }
    let report = run_verify(&cfg)?;
    let sink = Sink::new(f.out.as_deref())?;
    match f.format.unwrap_or(Format::Json) {
        Format::Json => emit_document(&sink, "verify", &cfg, &report, report.pass)?,
        Format::Csv => emit_table(&sink, &cfg, &report.rows)?,
    }
    for r in &report.rows {
        eprintln!(
            "{} {:<16} {:<28} {:<14} n={:<5} error={:.3e} tol={:.3e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.group,
            r.label,
            r.regime,
            r.n,
            r.error,
            r.tol
        );
    }
    Ok(report.pass)
}

fn estimate(f: &Flags) -> Result<bool, CliError> {
    let mut cfg = EstimateConfig::default();
    if let Some(n) = f.n {
        cfg.n = n;
    }
    if let Some(rho) = f.rho {
        cfg.rho = rho;
    }
    if let Some(r) = f.regime()? {
        cfg.regime = r;
    }
    if let Some(c) = f.c_true {
        cfg.c_true = c;
    }
    if let Some(e) = f.eta_rule()? {
        cfg.eta_rule = e;
    }
    if let Some(m) = f.m {
        cfg.m = positive_m(m)?;
    }
    if let Some(s) = f.seed {
        cfg.seed = s;
    }
    if let Some(t) = f.tol {
        cfg.tol = t;
    }
    let report = run_estimate(&cfg)?;
    let sink = Sink::new(f.out.as_deref())?;
    match f.format.unwrap_or(Format::Json) {
        Format::Json => output::emit_json_lines(&sink, &report.records)?,
        Format::Csv => emit_table(&sink, &cfg, &report.records)?,
    }
    let pass = report.pass();
    if let Some(path) = &f.out {
        let mut side = path.clone().into_os_string();
        side.push(".summary.json");
        emit_document(
            &Sink::new(Some(side.as_ref()))?,
            "estimate",
            &cfg,
            &report.summary,
            pass,
        )?;
    }
    let s = &report.summary;
    eprintln!(
        "{} QMLE: E[(rescaled)^2] = {:.4} vs limit {:.4} (rel. error {:.3})",
        if s.pass_hat { "PASS" } else { "FAIL" },
        s.second_moment_hat,
        s.limit_second_moment_hat,
        s.rel_err_hat
    );
    eprintln!(
        "{} QBE:  E[(rescaled)^2] = {:.4} vs limit {:.4} (rel. error {:.3})",
        if s.pass_tilde { "PASS" } else { "FAIL" },
        s.second_moment_tilde,
        s.limit_second_moment_tilde,
        s.rel_err_tilde
    );
    Ok(pass)
}

fn limit(f: &Flags) -> Result<bool, CliError> {
    let mut cfg = LimitConfig::default();
    if let Some(r) = f.regime()? {
        cfg.regime = r;
    }
    if let Some(rho) = f.rho {
        cfg.rhos = vec![rho];
    }
    if let Some(m) = f.m {
        cfg.m = m;
    }
    if let Some(s) = f.seed {
        cfg.seed = s;
    }
    if let Some(t) = f.tol {
        cfg.mle_tol = t;
    }
    let report = run_limit(&cfg)?;
    let sink = Sink::new(f.out.as_deref())?;
    match f.format.unwrap_or(Format::Json) {
        Format::Json => emit_document(&sink, "limit", &cfg, &report, report.pass)?,
        Format::Csv => emit_table(&sink, &cfg, &report.rows)?,
    }
    for r in &report.rows {
        eprintln!(
            "{} rho={:<6} gamma={:<4} E[u_hat^2]={:.5} E[u_tilde^2]={:.5} ratio={:.5}",
            if r.pass { "PASS" } else { "FAIL" },
            r.rho,
            r.gamma,
            r.e_u_hat_sq_closed,
            r.e_u_tilde_sq_quad,
            r.ratio
        );
    }
    if !report.ratio_decreasing {
        eprintln!("FAIL efficiency ratio is not strictly decreasing in |rho|");
    }
    Ok(report.pass)
}

fn constants(f: &Flags) -> Result<bool, CliError> {
    let cfg = ConstantsConfig {
        n: f.n.unwrap_or(2048),
        rho: f.rho.unwrap_or(0.5),
        regime: f.regime()?.unwrap_or(RegimeSpec::Zero),
        eta_rule: f.eta_rule()?.unwrap_or_default(),
    };
    let row = constants_row(cfg.regime, cfg.n, cfg.rho, cfg.eta_rule)?;
    let sink = Sink::new(f.out.as_deref())?;
    match f.format.unwrap_or(Format::Json) {
        Format::Json => emit_document(&sink, "constants", &cfg, &row, true)?,
        Format::Csv => emit_table(&sink, &cfg, &[row])?,
    }
    Ok(true)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LAGLAN_THREADS") else {
        return Ok(());
    };
    let k: usize = v.trim().parse().ok().filter(|&k| k > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "LAGLAN_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    configure_threads()?;
    let flags = cli.command.flags().resolve()?;
    match cli.command {
        Command::Simulate(_) => simulate(&flags),
        Command::Verify(_) => verify(&flags),
        Command::Estimate(_) => estimate(&flags),
        Command::Limit(_) => limit(&flags),
        Command::Constants(_) => constants(&flags),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("laglan {}: {msg}", cli.command.name());
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("laglan {}: {msg}", cli.command.name());
            ExitCode::from(1)
        }
    }
}
