//! Experiment drivers shared by the command-line tool and the test suites:
//! verification sweeps, estimator Monte Carlo campaigns and limit-experiment
//! tables. Every driver is deterministic given its configuration.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LagError, Result};
use crate::inference::{
    estimate, eta_for, hellinger_sq, uniform_prior, EtaRule, DEFAULT_C_INTERVAL,
};
use crate::limitexp::{
    bayes_limit_variance, mle_limit_variance, mle_zero_probability, sample_limit, SamplingPath,
};
use crate::simulate::{draw_replication, increment_factor};
use crate::spectral::{
    frobenius_limit_check_with, lemma_diagnostics, limit_constants, rel_err, sine_power_sum,
    BlockDct, LemmaParams,
};
use crate::structure::{exact_covariance, surrogate_covariance, CovKind, GammaMode, ModelSpec};

/// A regime as given on the command line: `zero`, `finite:<gamma>` (with
/// `v_n = gamma / n`) or `infinite:<v>` (constant `v_n = v`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RegimeSpec {
    Zero,
    Finite(f64),
    Infinite(f64),
}

impl RegimeSpec {
    pub fn gamma_mode(self) -> GammaMode {
        match self {
            RegimeSpec::Zero => GammaMode::Zero,
            RegimeSpec::Finite(g) => GammaMode::Finite(g),
            RegimeSpec::Infinite(_) => GammaMode::Infinite,
        }
    }

    /// The model at stage `n`, with `theta = 0`.
    pub fn model(self, n: usize, rho: f64) -> Result<ModelSpec> {
        match self {
            RegimeSpec::Zero => ModelSpec::noiseless(n, rho),
            RegimeSpec::Finite(g) => ModelSpec::balanced(n, rho, g),
            RegimeSpec::Infinite(v) => ModelSpec::noise_dominated(n, rho, v),
        }
    }

    /// The three regimes of the standard sweeps.
    pub fn standard() -> Vec<RegimeSpec> {
        vec![
            RegimeSpec::Zero,
            RegimeSpec::Finite(1.0),
            RegimeSpec::Infinite(0.25),
        ]
    }
}

impl fmt::Display for RegimeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegimeSpec::Zero => write!(f, "zero"),
            RegimeSpec::Finite(g) => write!(f, "finite:{g}"),
            RegimeSpec::Infinite(v) => write!(f, "infinite:{v}"),
        }
    }
}

impl FromStr for RegimeSpec {
    type Err = LagError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            LagError::InvalidSpec(format!(
                "regime must be zero, finite:<gamma> or infinite:<v>, got {s:?}"
            ))
        };
        let value = |v: &str| -> Result<f64> {
            let x: f64 = v.trim().parse().map_err(|_| bad())?;
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(bad())
            }
        };
        match s.trim().split_once(':') {
            None if s.trim() == "zero" => Ok(RegimeSpec::Zero),
            Some(("finite", g)) => Ok(RegimeSpec::Finite(value(g)?)),
            Some(("infinite", v)) => Ok(RegimeSpec::Infinite(value(v)?)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for RegimeSpec {
    type Error = LagError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RegimeSpec> for String {
    fn from(r: RegimeSpec) -> String {
        r.to_string()
    }
}

/// One line of a verification report. A row passes when `error <= tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub group: String,
    pub label: String,
    pub regime: String,
    pub n: usize,
    pub value: f64,
    pub target: f64,
    pub error: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckRow {
    fn new(
        group: &str,
        label: String,
        regime: String,
        n: usize,
        value: f64,
        target: f64,
        error: f64,
        tol: f64,
    ) -> Self {
        Self {
            group: group.to_string(),
            label,
            regime,
            n,
            value,
            target,
            error,
            tol,
            pass: error <= tol,
        }
    }
}

/// Grid of the Hellinger bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HellingerGrid {
    pub ns: Vec<usize>,
    pub noise: Vec<f64>,
    pub rhos: Vec<f64>,
    /// `theta = +-k bound / points` for `k = 1 .. points - 1`.
    pub points: usize,
}

impl Default for HellingerGrid {
    fn default() -> Self {
        Self {
            ns: vec![16, 64],
            noise: vec![0.05, 0.25],
            rhos: vec![0.3, -0.3, 0.7, -0.7],
            points: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub rho: f64,
    pub regimes: Vec<RegimeSpec>,
    pub n_grid: Vec<usize>,
    /// Relative error allowed at the largest `n` of the grid.
    pub frobenius_tol: f64,
    /// Allowed growth of the error from one grid point to the next.
    pub trend_slack: f64,
    pub lemma_n: usize,
    pub lemma_a: Vec<f64>,
    pub lemma_tol: f64,
    pub sine_n: usize,
    pub sine_tol: f64,
    /// Sizes for the coincidence of the two models at `|theta| <= 1/n`.
    pub equality_ns: Vec<usize>,
    pub equality_entry_tol: f64,
    pub equality_hellinger_tol: f64,
    pub hellinger: HellingerGrid,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            regimes: RegimeSpec::standard(),
            n_grid: vec![128, 256, 512, 1024, 2048],
            frobenius_tol: 0.05,
            trend_slack: 0.10,
            lemma_n: 2048,
            lemma_a: vec![0.5, 1.5],
            lemma_tol: 0.10,
            sine_n: 4096,
            sine_tol: 0.05,
            equality_ns: vec![1, 2, 3, 8, 16, 64],
            equality_entry_tol: 1e-12,
            equality_hellinger_tol: 1e-7,
            hellinger: HellingerGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
    pub pass: bool,
}

const FROBENIUS_PAIRS: [(f64, f64); 3] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];

/// Frobenius limits along the grid: each row must stay within
/// `(1 + slack)` of the previous error, and the last also within `tol`.
pub fn frobenius_rows(cfg: &VerifyConfig, regime: RegimeSpec) -> Result<Vec<CheckRow>> {
    let mut grid = cfg.n_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let blocks: Vec<(ModelSpec, BlockDct)> = grid
        .par_iter()
        .map(|&n| {
            let spec = regime.model(n, cfg.rho)?;
            let block = BlockDct::new(&spec);
            Ok((spec, block))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (alpha, beta) in FROBENIUS_PAIRS {
        let mut prev: Option<f64> = None;
        for (k, (spec, block)) in blocks.iter().enumerate() {
            let rep = frobenius_limit_check_with(spec, block, alpha, beta)?;
            let mut tol = prev.map_or(f64::MAX, |p| (1.0 + cfg.trend_slack) * p);
            if k + 1 == blocks.len() {
                tol = tol.min(cfg.frobenius_tol);
            }
            rows.push(CheckRow::new(
                "frobenius",
                format!("alpha={alpha},beta={beta}"),
                regime.to_string(),
                spec.n,
                rep.lhs,
                rep.rhs,
                rep.rel_err,
                tol,
            ));
            prev = Some(rep.rel_err);
        }
    }
    Ok(rows)
}

/// Sine-power sum and the two operator lemmas at `lemma_n`.
pub fn lemma_rows(cfg: &VerifyConfig, regime: RegimeSpec) -> Result<Vec<CheckRow>> {
    let spec = regime.model(cfg.lemma_n, cfg.rho)?;
    let mut rows = Vec::new();
    for (k, &a) in cfg.lemma_a.iter().enumerate() {
        // pair each a with the next one so the lag operator sees distinct arguments
        let b = cfg.lemma_a[(k + 1) % cfg.lemma_a.len()];
        let b = if b == a { a + 1.0 } else { b };
        let recs = lemma_diagnostics(&spec, LemmaParams { a, b, c: 1.0 })?;
        for rec in recs {
            let label = match rec.lemma_id.as_str() {
                "sym_operator" => format!("sym_operator a={a}"),
                "lag_operator" => format!("lag_operator a={a},b={b}"),
                _ => continue,
            };
            let (limit, err) = (
                rec.limit.unwrap_or(f64::NAN),
                rec.rel_err.unwrap_or(f64::NAN),
            );
            rows.push(CheckRow::new(
                "lemma",
                label,
                regime.to_string(),
                rec.n,
                rec.value,
                limit,
                err,
                cfg.lemma_tol,
            ));
        }
    }
    Ok(rows)
}

/// `sum sin^4 / sin^2` against its limit 2.
pub fn sine_row(cfg: &VerifyConfig) -> CheckRow {
    let n = cfg.sine_n;
    let value = sine_power_sum(n, n);
    CheckRow::new(
        "lemma",
        "sine_power_sum".into(),
        "any".into(),
        n,
        value,
        2.0,
        rel_err(value, 2.0),
        cfg.sine_tol,
    )
}

/// Exact and surrogate covariances coincide for `|theta| <= 1/n`.
pub fn equality_rows(cfg: &VerifyConfig, regime: RegimeSpec) -> Result<Vec<CheckRow>> {
    cfg.equality_ns
        .par_iter()
        .map(|&n| {
            let base = regime.model(n, cfg.rho)?;
            let step = 1.0 / n as f64;
            let mut entry = 0.0f64;
            let mut h2 = 0.0f64;
            for k in -4i32..=4 {
                let spec = base.clone().with_theta(step * k as f64 / 4.0);
                let c = exact_covariance(&spec)?;
                let s = surrogate_covariance(&spec)?;
                entry = entry.max((&c.matrix - &s.matrix).abs().max());
                // without noise the endpoint pins Y_1 (or X_1) to zero
                if k.abs() < 4 {
                    h2 = h2.max(hellinger_sq(&c, &s)?);
                }
            }
            let r = regime.to_string();
            Ok(vec![
                CheckRow::new(
                    "equality",
                    "max_entry_gap".into(),
                    r.clone(),
                    n,
                    entry,
                    0.0,
                    entry,
                    cfg.equality_entry_tol,
                ),
                CheckRow::new(
                    "equality",
                    "hellinger".into(),
                    r,
                    n,
                    h2.sqrt(),
                    0.0,
                    h2.sqrt(),
                    cfg.equality_hellinger_tol,
                ),
            ])
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// `H^2 <= 2 v^-2 rho^2 n^2 |theta|^3` over interior points of the lag domain.
/// The value reported is the largest ratio of the two sides.
pub fn hellinger_bound_rows(grid: &HellingerGrid) -> Result<Vec<CheckRow>> {
    let mut cases = Vec::new();
    for &n in &grid.ns {
        for &v in &grid.noise {
            for &rho in &grid.rhos {
                cases.push((n, v, rho));
            }
        }
    }
    cases
        .par_iter()
        .map(|&(n, v, rho)| {
            let base = ModelSpec::new(n, rho, v, GammaMode::Finite(n as f64 * v))?;
            let bound = base.theta_bound();
            let nf = n as f64;
            let mut worst = 0.0f64;
            let mut violations = 0usize;
            for k in 1..grid.points {
                for sign in [1.0, -1.0] {
                    let theta = sign * bound * k as f64 / grid.points as f64;
                    let spec = base.clone().with_theta(theta);
                    let h2 =
                        hellinger_sq(&exact_covariance(&spec)?, &surrogate_covariance(&spec)?)?;
                    let rhs = 2.0 * rho * rho * nf * nf * theta.abs().powi(3) / (v * v);
                    if h2 > rhs {
                        violations += 1;
                    }
                    worst = worst.max(h2 / rhs);
                }
            }
            Ok(CheckRow::new(
                "hellinger_bound",
                format!("v={v},rho={rho},violations={violations}"),
                "any".into(),
                n,
                worst,
                1.0,
                worst,
                1.0,
            ))
        })
        .collect()
}

pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut rows = Vec::new();
    for &regime in &cfg.regimes {
        rows.extend(frobenius_rows(cfg, regime)?);
    }
    rows.push(sine_row(cfg));
    for &regime in &cfg.regimes {
        rows.extend(lemma_rows(cfg, regime)?);
    }
    for &regime in &cfg.regimes {
        rows.extend(equality_rows(cfg, regime)?);
    }
    rows.extend(hellinger_bound_rows(&cfg.hellinger)?);
    let pass = rows.iter().all(|r| r.pass);
    Ok(VerifyReport { rows, pass })
}

/// Which law generates the data of an estimation campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataModel {
    /// Exact model for finite `gamma`, surrogate model for `gamma = inf`.
    #[default]
    Auto,
    Exact,
    Surrogate,
}

impl DataModel {
    pub fn kind(self, mode: GammaMode) -> CovKind {
        match (self, mode) {
            (DataModel::Exact, _) => CovKind::ExactC,
            (DataModel::Surrogate, _) | (DataModel::Auto, GammaMode::Infinite) => {
                CovKind::SurrogateCtilde
            }
            (DataModel::Auto, _) => CovKind::ExactC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateConfig {
    pub n: usize,
    pub rho: f64,
    pub regime: RegimeSpec,
    pub c_true: f64,
    pub eta_rule: EtaRule,
    pub c_interval: (f64, f64),
    pub data_model: DataModel,
    pub m: usize,
    pub seed: u64,
    /// Relative tolerance of the second moments against their limits.
    pub tol: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            n: 2048,
            rho: 0.5,
            regime: RegimeSpec::Zero,
            c_true: 0.0,
            eta_rule: EtaRule::Default,
            c_interval: DEFAULT_C_INTERVAL,
            data_model: DataModel::Auto,
            m: 1000,
            seed: 20_240_601,
            tol: 0.15,
        }
    }
}

/// Per-replication output of an estimation campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub replication: u64,
    pub seed: u64,
    pub c_true: f64,
    pub c_hat: f64,
    pub c_tilde: f64,
    pub rescaled_hat: f64,
    pub rescaled_tilde: f64,
    pub loglik_at_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub m: usize,
    pub eta_n: f64,
    pub rate_scale: f64,
    pub i: f64,
    pub j: f64,
    pub mean_rescaled_hat: f64,
    pub mean_rescaled_tilde: f64,
    pub second_moment_hat: f64,
    pub second_moment_tilde: f64,
    pub limit_second_moment_hat: f64,
    pub limit_second_moment_tilde: f64,
    pub rel_err_hat: f64,
    pub rel_err_tilde: f64,
    /// Fraction of replications whose QMLE sits on the kink `c = 0`; compare
    /// with `P(u_hat = 0)` when `c_true = 0`.
    pub fraction_hat_at_zero: f64,
    pub limit_zero_probability: f64,
    pub pass_hat: bool,
    pub pass_tilde: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub records: Vec<EstimateRecord>,
    pub summary: EstimateSummary,
}

impl EstimateReport {
    pub fn pass(&self) -> bool {
        self.summary.pass_hat && self.summary.pass_tilde
    }
}

/// Checks that an estimation campaign can run at all.
pub fn check_estimate(cfg: &EstimateConfig) -> Result<(ModelSpec, f64)> {
    if cfg.m == 0 {
        return Err(LagError::InvalidSpec(
            "replication count m must be positive".into(),
        ));
    }
    let spec = cfg.regime.model(cfg.n, cfg.rho)?;
    let eta = eta_for(&spec, cfg.eta_rule, cfg.c_interval)?;
    let (lo, hi) = cfg.c_interval;
    if !(cfg.c_true > lo && cfg.c_true < hi) {
        return Err(LagError::InvalidSpec(format!(
            "c_true = {} must lie inside the interval ({lo}, {hi})",
            cfg.c_true
        )));
    }
    spec.require_theta_domain(lo.abs().max(hi.abs()) * eta)?;
    Ok((spec, eta))
}

/// Draws `m` data sets at `theta = c_true eta_n` and estimates `c` on each.
pub fn run_estimate(cfg: &EstimateConfig) -> Result<EstimateReport> {
    let (spec, eta) = check_estimate(cfg)?;
    let theta = cfg.c_true * eta;
    let factor = increment_factor(&spec, theta, cfg.data_model.kind(spec.gamma_mode))?;
    let results = (0..cfg.m as u64)
        .into_par_iter()
        .map(|r| {
            let z = draw_replication(&factor, cfg.seed, r);
            estimate(&spec, &z, eta, cfg.c_interval, cfg.c_true, &uniform_prior)
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<EstimateRecord> = results
        .iter()
        .enumerate()
        .map(|(r, e)| EstimateRecord {
            replication: r as u64,
            seed: cfg.seed,
            c_true: cfg.c_true,
            c_hat: e.c_hat,
            c_tilde: e.c_tilde,
            rescaled_hat: e.rescaled_hat,
            rescaled_tilde: e.rescaled_tilde,
            loglik_at_hat: e.loglik_at_hat,
        })
        .collect();
    let rate_scale = results[0].diagnostics.rate_scale;
    let consts = limit_constants(spec.gamma_mode, spec.rho)?;
    let mf = cfg.m as f64;
    let mean = |f: &dyn Fn(&EstimateRecord) -> f64| records.iter().map(f).sum::<f64>() / mf;
    let second_hat = mean(&|r| r.rescaled_hat.powi(2));
    let second_tilde = mean(&|r| r.rescaled_tilde.powi(2));
    let target_hat = mle_limit_variance(consts.i, consts.j)?;
    let target_tilde = bayes_limit_variance(consts.i, consts.j)?;
    let (e_hat, e_tilde) = (
        rel_err(second_hat, target_hat),
        rel_err(second_tilde, target_tilde),
    );
    let summary = EstimateSummary {
        m: cfg.m,
        eta_n: eta,
        rate_scale,
        i: consts.i,
        j: consts.j,
        mean_rescaled_hat: mean(&|r| r.rescaled_hat),
        mean_rescaled_tilde: mean(&|r| r.rescaled_tilde),
        second_moment_hat: second_hat,
        second_moment_tilde: second_tilde,
        limit_second_moment_hat: target_hat,
        limit_second_moment_tilde: target_tilde,
        rel_err_hat: e_hat,
        rel_err_tilde: e_tilde,
        fraction_hat_at_zero: mean(&|r| f64::from(u8::from(r.c_hat == 0.0))),
        limit_zero_probability: mle_zero_probability(consts.i, consts.j)?,
        pass_hat: e_hat < cfg.tol,
        pass_tilde: e_tilde < cfg.tol,
    };
    Ok(EstimateReport { records, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitConfig {
    pub regime: RegimeSpec,
    pub rhos: Vec<f64>,
    /// Monte Carlo draws per row; zero skips the simulation.
    pub m: usize,
    pub seed: u64,
    pub path: SamplingPath,
    /// Relative tolerance of the closed-form `E[u_hat^2]` against Monte Carlo.
    pub mle_tol: f64,
    /// Relative tolerance of the quadrature `E[u_tilde^2]` against Monte Carlo.
    pub bayes_tol: f64,
    /// Appends a `gamma = inf` row at the first `rho`, where `J = 0`.
    pub reference_row: bool,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            regime: RegimeSpec::Zero,
            rhos: vec![0.5, 0.9, 0.99, 0.999],
            m: 1_000_000,
            seed: 20_240_601,
            path: SamplingPath::Zeta,
            mle_tol: 0.01,
            bayes_tol: 0.02,
            reference_row: true,
        }
    }
}

/// One row of the efficiency table. Monte Carlo columns are empty when `m = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub rho: f64,
    /// `gamma` as text, `inf` for the noise-dominated regime.
    pub gamma: String,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub e_u_hat_sq_closed: f64,
    pub e_u_hat_sq_mc: Option<f64>,
    pub e_u_tilde_sq_quad: f64,
    pub e_u_tilde_sq_mc: Option<f64>,
    pub p_u_hat_zero: f64,
    /// `E[u_tilde^2] / E[u_hat^2]`.
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub rows: Vec<LimitRow>,
    /// Ratio strictly decreasing in `|rho|` over the rows with `J > 0`.
    pub ratio_decreasing: bool,
    pub pass: bool,
}

/// `gamma` for tables; JSON has no infinity.
pub fn gamma_label(mode: GammaMode) -> String {
    match mode {
        GammaMode::Infinite => "inf".into(),
        m => m.value().to_string(),
    }
}

pub fn limit_row(gamma: GammaMode, rho: f64, cfg: &LimitConfig) -> Result<LimitRow> {
    let c = limit_constants(gamma, rho)?;
    let closed = mle_limit_variance(c.i, c.j)?;
    let quad = bayes_limit_variance(c.i, c.j)?;
    let (mut hat_mc, mut tilde_mc, mut pass) = (None, None, true);
    if cfg.m > 0 {
        let draws = sample_limit(rho, gamma, cfg.seed, cfg.m, cfg.path)?;
        let mf = cfg.m as f64;
        let h = draws.iter().map(|d| d.u_hat * d.u_hat).sum::<f64>() / mf;
        let t = draws.iter().map(|d| d.u_tilde * d.u_tilde).sum::<f64>() / mf;
        pass = rel_err(closed, h) < cfg.mle_tol && rel_err(quad, t) < cfg.bayes_tol;
        hat_mc = Some(h);
        tilde_mc = Some(t);
    }
    Ok(LimitRow {
        rho,
        gamma: gamma_label(gamma),
        i: c.i,
        j: c.j,
        r: (c.j - c.i) / (c.j + c.i),
        e_u_hat_sq_closed: closed,
        e_u_hat_sq_mc: hat_mc,
        e_u_tilde_sq_quad: quad,
        e_u_tilde_sq_mc: tilde_mc,
        p_u_hat_zero: mle_zero_probability(c.i, c.j)?,
        ratio: quad / closed,
        pass,
    })
}

pub fn run_limit(cfg: &LimitConfig) -> Result<LimitReport> {
    if cfg.rhos.is_empty() {
        return Err(LagError::InvalidSpec("the rho sweep is empty".into()));
    }
    let mode = cfg.regime.gamma_mode();
    let mut rows = cfg
        .rhos
        .iter()
        .map(|&rho| limit_row(mode, rho, cfg))
        .collect::<Result<Vec<_>>>()?;
    if cfg.reference_row && mode != GammaMode::Infinite {
        rows.push(limit_row(GammaMode::Infinite, cfg.rhos[0], cfg)?);
    }
    let mut sweep: Vec<&LimitRow> = rows
        .iter()
        .filter(|r| r.gamma == gamma_label(mode) && r.j > 0.0)
        .collect();
    sweep.sort_by(|a, b| a.rho.abs().total_cmp(&b.rho.abs()));
    let ratio_decreasing = sweep.windows(2).all(|w| w[1].ratio < w[0].ratio);
    let pass = ratio_decreasing && rows.iter().all(|r| r.pass);
    Ok(LimitReport {
        rows,
        ratio_decreasing,
        pass,
    })
}

/// Derived quantities of one model, as printed by the `constants` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRow {
    pub n: usize,
    pub rho: f64,
    pub v_n: f64,
    pub gamma: String,
    pub effective_n: f64,
    pub rate: f64,
    pub theta_bound: f64,
    pub eta_n: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub e_u_hat_sq: f64,
    pub e_u_tilde_sq: f64,
}

pub fn constants_row(
    regime: RegimeSpec,
    n: usize,
    rho: f64,
    rule: EtaRule,
) -> Result<ConstantsRow> {
    let spec = regime.model(n, rho)?;
    let reg = spec.regime()?;
    let c = limit_constants(spec.gamma_mode, rho)?;
    Ok(ConstantsRow {
        n,
        rho,
        v_n: spec.v_n,
        gamma: gamma_label(spec.gamma_mode),
        effective_n: reg.effective_n,
        rate: reg.rate,
        theta_bound: spec.theta_bound(),
        eta_n: eta_for(&spec, rule, DEFAULT_C_INTERVAL)?,
        i: c.i,
        j: c.j,
        e_u_hat_sq: mle_limit_variance(c.i, c.j)?,
        e_u_tilde_sq: bayes_limit_variance(c.i, c.j)?,
    })
}
