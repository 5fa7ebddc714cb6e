//! Gaussian likelihoods, LAN statistics and residuals, Hellinger distances
//! and the quasi-likelihood estimators of a localized lag.
//!
//! Every likelihood is evaluated on the differenced vector
//! `(nabla (+) nabla) Z_n` in interleaved order, where all covariances are
//! banded. The change of variables has unit Jacobian, so these are also the
//! log-densities of `Z_n` itself.

use std::cell::Cell;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::banded::{BandedCholesky, BandedSym};
use crate::error::{LagError, Result};
use crate::spectral::{limit_constants, sbar_trace, LimitConstants};
use crate::structure::{
    banded_differenced, banded_gbar, classify_regime, difference_blocks, interleave, CovKind,
    CovarianceModel, GammaMode, ModelSpec,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check_len(spec: &ModelSpec, z: &[f64]) -> Result<()> {
    if z.len() == 2 * spec.n {
        Ok(())
    } else {
        Err(LagError::DimensionMismatch {
            expected: 2 * spec.n,
            got: z.len(),
        })
    }
}

/// `(nabla (+) nabla) Z_n` in interleaved order.
pub fn differenced_data(spec: &ModelSpec, z: &[f64]) -> Result<Vec<f64>> {
    check_len(spec, z)?;
    Ok(interleave(&difference_blocks(z)))
}

fn factor(cov: &BandedSym, theta: f64) -> Result<BandedCholesky> {
    cov.cholesky()
        .map_err(|(index, pivot)| LagError::NotPositiveDefinite {
            theta,
            index,
            pivot,
        })
}

fn gaussian_loglik(chol: &BandedCholesky, x: &[f64]) -> f64 {
    -0.5 * (x.len() as f64 * LN_2PI + chol.log_det() + chol.inv_quad_form(x))
}

/// Log-density of already differenced, interleaved data.
pub fn loglik_differenced(spec: &ModelSpec, zt: &[f64], theta: f64, kind: CovKind) -> Result<f64> {
    check_len(spec, zt)?;
    let cov = banded_differenced(spec, theta, kind)?;
    Ok(gaussian_loglik(&factor(&cov, theta)?, zt))
}

/// Gaussian log-density of `Z_n` (block order) under `kind` at `theta`.
///
/// `DifferencedV` evaluates the density of the differenced vector, which is
/// the same number as the `SurrogateCtilde` density of `Z_n`.
pub fn loglik(spec: &ModelSpec, z: &[f64], theta: f64, kind: CovKind) -> Result<f64> {
    loglik_differenced(spec, &differenced_data(spec, z)?, theta, kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanStats {
    pub t_n: f64,
    pub s_n: f64,
    pub i: f64,
    pub j: f64,
}

fn tbar_entry(a: usize, i: usize, b: usize, j: usize) -> f64 {
    if a == b {
        return match (i, j, a) {
            (0, 0, 0) => -0.5,
            (0, 0, _) => 0.5,
            _ => 0.0,
        };
    }
    // upper-right block is T = nabla^T - nabla
    let (i, j) = if a == 0 { (i, j) } else { (j, i) };
    if j == i + 1 {
        -0.5
    } else if i == j + 1 {
        0.5
    } else {
        0.0
    }
}

fn sbar_entry(a: usize, i: usize, b: usize, j: usize) -> f64 {
    if a == b {
        return if i == 0 && j == 0 { 0.5 } else { 0.0 };
    }
    if i == j {
        1.0
    } else if i.abs_diff(j) == 1 {
        -0.5
    } else {
        0.0
    }
}

fn banded_structure(n: usize, entry: fn(usize, usize, usize, usize) -> f64) -> BandedSym {
    BandedSym::from_fn(2 * n, 3, |p, q| entry(p % 2, p / 2, q % 2, q / 2))
}

/// Everything the LAN statistics need that does not depend on the data.
#[derive(Debug, Clone)]
pub struct LanContext {
    pub spec: ModelSpec,
    pub rate: f64,
    pub constants: LimitConstants,
    gbar: BandedCholesky,
    tbar: BandedSym,
    sbar: BandedSym,
    tr_s: f64,
}

impl LanContext {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let rate = classify_regime(spec)?.rate;
        let constants = limit_constants(spec.gamma_mode, spec.rho)?;
        let gbar = factor(&banded_gbar(spec), 0.0)?;
        Ok(Self {
            spec: spec.clone(),
            rate,
            constants,
            gbar,
            tbar: banded_structure(spec.n, tbar_entry),
            sbar: banded_structure(spec.n, sbar_entry),
            tr_s: sbar_trace(spec),
        })
    }

    /// `(tr(Gbar^{-1} Tbar), tr(Gbar^{-1} Sbar))`.
    pub fn traces(&self) -> (f64, f64) {
        (0.0, self.tr_s)
    }

    /// Score statistics, oriented so that the log-likelihood ratio is
    /// `u T_n + |u| S_n - u^2 (I + J) / 2 + o_p(1)`:
    /// `T_n = -(rho/2) r_n (w^T Tbar w - tr(Gbar^{-1} Tbar))` with `w = Gbar^{-1} Z~`.
    pub fn stats_differenced(&self, zt: &[f64]) -> Result<LanStats> {
        check_len(&self.spec, zt)?;
        let w = self.gbar.solve(zt);
        let scale = -0.5 * self.spec.rho * self.rate;
        Ok(LanStats {
            t_n: scale * self.tbar.quad_form(&w),
            s_n: scale * (self.sbar.quad_form(&w) - self.tr_s),
            i: self.constants.i,
            j: self.constants.j,
        })
    }

    pub fn stats(&self, z: &[f64]) -> Result<LanStats> {
        self.stats_differenced(&differenced_data(&self.spec, z)?)
    }

    /// `log dP_{r u}/dP_0 - {u T_n + |u| S_n - u^2 (I + J) / 2}`.
    ///
    /// `kind` selects the exact model (the default in the drivers) or the surrogate.
    pub fn residual(&self, z: &[f64], u: f64, kind: CovKind) -> Result<f64> {
        let zt = differenced_data(&self.spec, z)?;
        let theta = self.rate * u;
        let l1 = loglik_differenced(&self.spec, &zt, theta, kind)?;
        let l0 = loglik_differenced(&self.spec, &zt, 0.0, kind)?;
        let st = self.stats_differenced(&zt)?;
        let quad = u * st.t_n + u.abs() * st.s_n - 0.5 * u * u * self.constants.total();
        Ok(l1 - l0 - quad)
    }
}

pub fn lan_stats(spec: &ModelSpec, z: &[f64]) -> Result<LanStats> {
    LanContext::new(spec)?.stats(z)
}

pub fn lan_residual(spec: &ModelSpec, z: &[f64], u: f64, kind: CovKind) -> Result<f64> {
    LanContext::new(spec)?.residual(z, u, kind)
}

/// Squared Hellinger distance `2 (1 - BC)` between centered Gaussians.
///
/// With `C1 = L L^T` and `delta` the eigenvalues of `L^{-1} (C2 - C1) L^{-T}`,
/// `log BC = sum log(1 + delta) / 4 - log(1 + delta / 2) / 2`.
pub fn hellinger_sq(c1: &CovarianceModel, c2: &CovarianceModel) -> Result<f64> {
    if c1.dim() != c2.dim() {
        return Err(LagError::DimensionMismatch {
            expected: c1.dim(),
            got: c2.dim(),
        });
    }
    let chol = c1
        .matrix
        .clone()
        .cholesky()
        .ok_or_else(|| LagError::Domain("first covariance is not positive definite".into()))?;
    let l = chol.l();
    let diff = &c2.matrix - &c1.matrix;
    let singular = || LagError::Domain("singular factor".into());
    let x = l.solve_lower_triangular(&diff).ok_or_else(singular)?;
    let m = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(singular)?;
    let m = (&m + m.transpose()) * 0.5;
    let delta = SymmetricEigen::new(m).eigenvalues;
    if delta.iter().any(|&d| !(d > -1.0)) {
        return Err(LagError::Domain(
            "second covariance is not positive definite".into(),
        ));
    }
    let log_bc: f64 = delta
        .iter()
        .map(|&d| 0.25 * d.ln_1p() - 0.5 * (0.5 * d).ln_1p())
        .sum();
    Ok((-2.0 * log_bc.exp_m1()).max(0.0))
}

pub fn hellinger(c1: &CovarianceModel, c2: &CovarianceModel) -> Result<f64> {
    Ok(hellinger_sq(c1, c2)?.sqrt())
}

/// How the localization rate `eta_n` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum EtaRule {
    /// `1/(n log n)` for finite `gamma`, `N_n^{-4/3} / log n` for `gamma = inf`.
    #[default]
    Default,
    /// Largest rate keeping `c eta_n` inside the lag domain for all `c`, less a 2% margin.
    FillDomain,
    Fixed(f64),
}

pub const DEFAULT_C_INTERVAL: (f64, f64) = (-5.0, 5.0);

const FILL_FRACTION: f64 = 0.98;

fn check_interval((lo, hi): (f64, f64)) -> Result<()> {
    if lo < hi && lo.is_finite() && hi.is_finite() {
        Ok(())
    } else {
        Err(LagError::InvalidSpec(format!(
            "c interval ({lo}, {hi}) must be bounded and nonempty"
        )))
    }
}

fn c_reach((lo, hi): (f64, f64)) -> f64 {
    lo.abs().max(hi.abs())
}

pub fn eta_for(spec: &ModelSpec, rule: EtaRule, interval: (f64, f64)) -> Result<f64> {
    check_interval(interval)?;
    let eta = match rule {
        EtaRule::Default => {
            if spec.n < 2 {
                return Err(LagError::InvalidSpec(
                    "the default rate needs n >= 2".into(),
                ));
            }
            let log_n = (spec.n as f64).ln();
            match spec.gamma_mode {
                GammaMode::Infinite => classify_regime(spec)?.effective_n.powf(-4.0 / 3.0) / log_n,
                _ => 1.0 / (spec.n as f64 * log_n),
            }
        }
        EtaRule::FillDomain => FILL_FRACTION * spec.theta_bound() / c_reach(interval),
        EtaRule::Fixed(e) => e,
    };
    if eta > 0.0 && eta.is_finite() {
        Ok(eta)
    } else {
        Err(LagError::InvalidSpec(format!(
            "eta_n must be positive, got {eta}"
        )))
    }
}

/// `c -> L_n(c)`, the surrogate log-likelihood of `V_n(c eta_n)`.
///
/// `V_n(theta) = Gbar - rho (theta Tbar + |theta| Sbar) - (1 - rho) |theta| e e^T`,
/// `e` the first increment of the lagged series, assembled from precomputed bands.
pub struct LocalizedLikelihood<'a> {
    spec: &'a ModelSpec,
    zt: Vec<f64>,
    gbar: BandedSym,
    tbar: BandedSym,
    sbar: BandedSym,
    pub eta: f64,
    pub interval: (f64, f64),
    evaluations: Cell<usize>,
}

impl<'a> LocalizedLikelihood<'a> {
    pub fn new(spec: &'a ModelSpec, z: &[f64], eta: f64, interval: (f64, f64)) -> Result<Self> {
        check_interval(interval)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(LagError::InvalidSpec(format!(
                "eta_n must be positive, got {eta}"
            )));
        }
        spec.require_theta_domain(eta * c_reach(interval))?;
        let widen = |m: BandedSym| BandedSym::from_fn(m.dim(), 3, |p, q| m.get(p, q));
        Ok(Self {
            spec,
            zt: differenced_data(spec, z)?,
            gbar: widen(banded_gbar(spec)),
            tbar: banded_structure(spec.n, tbar_entry),
            sbar: banded_structure(spec.n, sbar_entry),
            eta,
            interval,
            evaluations: Cell::new(0),
        })
    }

    /// `-inf` where the covariance fails to factor.
    pub fn covariance(&self, c: f64) -> BandedSym {
        let theta = c * self.eta;
        let rho = self.spec.rho;
        let mut v = self.gbar.clone();
        if theta != 0.0 {
            v.axpy(-rho * theta, &self.tbar);
            v.axpy(-rho * theta.abs(), &self.sbar);
            let k = if theta > 0.0 { 1 } else { 0 };
            v.set(k, k, v.get(k, k) - (1.0 - rho) * theta.abs());
        }
        v
    }

    pub fn eval(&self, c: f64) -> f64 {
        self.evaluations.set(self.evaluations.get() + 1);
        match self.covariance(c).cholesky() {
            Ok(chol) => gaussian_loglik(&chol, &self.zt),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }
}

/// The closure of the interval cut at the kink `c = 0`.
fn sides((lo, hi): (f64, f64)) -> Vec<(f64, f64)> {
    if hi <= 0.0 || lo >= 0.0 {
        vec![(lo, hi)]
    } else {
        vec![(lo, 0.0), (0.0, hi)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    /// Coarse grid intervals per side of the kink.
    pub grid_per_side: usize,
    /// Golden-section stopping width, relative to the interval length.
    pub rel_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            grid_per_side: 32,
            rel_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maximum {
    pub arg: f64,
    pub value: f64,
}

fn better(a: Option<Maximum>, arg: f64, value: f64) -> Option<Maximum> {
    match a {
        Some(m) if m.value >= value || value.is_nan() => Some(m),
        _ if value.is_nan() || value == f64::NEG_INFINITY => a,
        _ => Some(Maximum { arg, value }),
    }
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Maximum {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        Maximum { arg: x1, value: f1 }
    } else {
        Maximum { arg: x2, value: f2 }
    }
}

/// Maximizes `f` over the closed interval, separately on each side of zero:
/// a coarse grid locates the best cell, golden section refines it.
pub fn maximize_two_sided(
    f: &dyn Fn(f64) -> f64,
    interval: (f64, f64),
    opts: OptimOptions,
) -> Result<Maximum> {
    check_interval(interval)?;
    let g = opts.grid_per_side.max(2);
    let tol = opts.rel_tol * (interval.1 - interval.0);
    let mut best = None;
    for (a, b) in sides(interval) {
        let pts: Vec<f64> = (0..=g).map(|k| a + (b - a) * k as f64 / g as f64).collect();
        let vals: Vec<f64> = pts.iter().map(|&c| f(c)).collect();
        let Some(k) = (0..=g)
            .filter(|&k| vals[k].is_finite())
            .max_by(|&x, &y| vals[x].total_cmp(&vals[y]))
        else {
            continue;
        };
        best = better(best, pts[k], vals[k]);
        let lo = pts[k.saturating_sub(1)];
        let hi = pts[(k + 1).min(g)];
        let m = golden_section(f, lo, hi, tol);
        best = better(best, m.arg, m.value);
    }
    best.ok_or_else(|| {
        LagError::EstimationFailed("likelihood is not finite anywhere on the grid".into())
    })
}

/// Brute-force maximizer on a grid of spacing at most `delta` that contains 0.
pub fn grid_maximize(f: &dyn Fn(f64) -> f64, interval: (f64, f64), delta: f64) -> Result<Maximum> {
    check_interval(interval)?;
    let mut best = None;
    for (a, b) in sides(interval) {
        let k = ((b - a) / delta).ceil().max(1.0) as usize;
        for i in 0..=k {
            let c = a + (b - a) * i as f64 / k as f64;
            best = better(best, c, f(c));
        }
    }
    best.ok_or_else(|| {
        LagError::EstimationFailed("likelihood is not finite anywhere on the grid".into())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    /// Starting Simpson panels per side of the kink.
    pub initial_panels: usize,
    /// Tolerance relative to the normalizing integral. Much below `1e-9` the
    /// rounding noise of `L_n` itself (of order `1e-12 |L_n|`) dominates.
    pub rel_tol: f64,
    pub max_depth: u32,
    pub max_evaluations: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            initial_panels: 16,
            rel_tol: 1e-8,
            max_depth: 30,
            max_evaluations: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMean {
    pub mean: f64,
    /// Estimated absolute error of `mean`.
    pub error_estimate: f64,
}

#[derive(Default)]
struct SimpsonAcc {
    den: f64,
    num: f64,
    err_den: f64,
    err_num: f64,
    evaluations: usize,
    budget: usize,
    failed: bool,
}

type Pair = [f64; 2];

fn simpson(h: f64, fa: Pair, fm: Pair, fb: Pair) -> Pair {
    [0, 1].map(|k| h / 6.0 * (fa[k] + 4.0 * fm[k] + fb[k]))
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    g: &dyn Fn(f64) -> Pair,
    a: f64,
    b: f64,
    fa: Pair,
    fm: Pair,
    fb: Pair,
    whole: Pair,
    tol: f64,
    scale: f64,
    depth: u32,
    acc: &mut SimpsonAcc,
) {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (g(lm), g(rm));
    acc.evaluations += 2;
    let left = simpson(m - a, fa, flm, fm);
    let right = simpson(b - m, fm, frm, fb);
    let d = [0, 1].map(|k| left[k] + right[k] - whole[k]);
    let err = d[0].abs().max(d[1].abs() / scale);
    if err <= 15.0 * tol || depth == 0 || acc.evaluations >= acc.budget {
        if err > 15.0 * tol {
            acc.failed = true;
        }
        acc.den += left[0] + right[0] + d[0] / 15.0;
        acc.num += left[1] + right[1] + d[1] / 15.0;
        acc.err_den += d[0].abs() / 15.0;
        acc.err_num += d[1].abs() / 15.0;
    } else {
        adapt(g, a, m, fa, flm, fm, left, 0.5 * tol, scale, depth - 1, acc);
        adapt(
            g,
            m,
            b,
            fm,
            frm,
            fb,
            right,
            0.5 * tol,
            scale,
            depth - 1,
            acc,
        );
    }
}

fn weight<'a>(
    loglik: &'a dyn Fn(f64) -> f64,
    prior: &'a dyn Fn(f64) -> f64,
    shift: f64,
) -> impl Fn(f64) -> Pair + 'a {
    move |c| {
        let w = (loglik(c) - shift).exp() * prior(c);
        let w = if w.is_finite() { w } else { 0.0 };
        [w, c * w]
    }
}

fn finish(den: f64, num: f64, err_den: f64, err_num: f64) -> Result<PosteriorMean> {
    if !(den > 0.0 && den.is_finite()) {
        return Err(LagError::EstimationFailed(format!(
            "posterior normalizer is {den}"
        )));
    }
    let mean = num / den;
    Ok(PosteriorMean {
        mean,
        error_estimate: (err_num + mean.abs() * err_den) / den,
    })
}

/// `int c e^{L - shift} q / int e^{L - shift} q` by adaptive Simpson on each side of zero.
///
/// `shift` should be close to `max L`; the QMLE value is the natural choice.
pub fn posterior_mean(
    loglik: &dyn Fn(f64) -> f64,
    prior: &dyn Fn(f64) -> f64,
    interval: (f64, f64),
    shift: f64,
    opts: QuadOptions,
) -> Result<PosteriorMean> {
    check_interval(interval)?;
    let g = weight(loglik, prior, shift);
    let scale = c_reach(interval).max(1.0);
    let panels = opts.initial_panels.max(1);
    // coarse pass: panel end points and midpoints, reused by the refinement
    let mut coarse = Vec::new();
    let mut den0 = 0.0;
    for (a, b) in sides(interval) {
        let h = (b - a) / panels as f64;
        let mut fa = g(a);
        for k in 0..panels {
            let x0 = a + h * k as f64;
            let x1 = if k + 1 == panels { b } else { x0 + h };
            let (fm, fb) = (g(0.5 * (x0 + x1)), g(x1));
            let whole = simpson(x1 - x0, fa, fm, fb);
            den0 += whole[0];
            coarse.push((x0, x1, fa, fm, fb, whole));
            fa = fb;
        }
    }
    if !(den0 > 0.0 && den0.is_finite()) {
        return Err(LagError::EstimationFailed(format!(
            "posterior normalizer is {den0}"
        )));
    }
    let tol = opts.rel_tol * den0 / coarse.len() as f64;
    let mut acc = SimpsonAcc {
        evaluations: 3 * coarse.len(),
        budget: opts.max_evaluations,
        ..Default::default()
    };
    for (x0, x1, fa, fm, fb, whole) in coarse {
        adapt(
            &g,
            x0,
            x1,
            fa,
            fm,
            fb,
            whole,
            tol,
            scale,
            opts.max_depth,
            &mut acc,
        );
    }
    let out = finish(acc.den, acc.num, acc.err_den, acc.err_num)?;
    if acc.failed || acc.evaluations >= acc.budget {
        return Err(LagError::EstimationFailed(format!(
            "posterior quadrature stopped short of tolerance after {} evaluations; error estimate {:e}",
            acc.evaluations, out.error_estimate
        )));
    }
    Ok(out)
}

/// Fixed composite Simpson rule with `panels` panels per side, for self-convergence checks.
pub fn posterior_mean_composite(
    loglik: &dyn Fn(f64) -> f64,
    prior: &dyn Fn(f64) -> f64,
    interval: (f64, f64),
    shift: f64,
    panels: usize,
) -> Result<PosteriorMean> {
    check_interval(interval)?;
    let g = weight(loglik, prior, shift);
    let (mut den, mut num) = (0.0, 0.0);
    for (a, b) in sides(interval) {
        let h = (b - a) / panels as f64;
        for k in 0..panels {
            let x0 = a + h * k as f64;
            let x1 = if k + 1 == panels { b } else { x0 + h };
            let s = simpson(x1 - x0, g(x0), g(0.5 * (x0 + x1)), g(x1));
            den += s[0];
            num += s[1];
        }
    }
    finish(den, num, 0.0, 0.0)
}

pub fn uniform_prior(_c: f64) -> f64 {
    1.0
}

/// Quasi maximum likelihood estimate of `c` over the closure of the interval.
pub fn qmle(spec: &ModelSpec, z: &[f64], eta: f64, interval: (f64, f64)) -> Result<Maximum> {
    let lik = LocalizedLikelihood::new(spec, z, eta, interval)?;
    maximize_two_sided(&|c| lik.eval(c), interval, OptimOptions::default())
}

/// Quasi Bayes estimate of `c` (posterior mean under `prior`).
pub fn qbe(
    spec: &ModelSpec,
    z: &[f64],
    eta: f64,
    interval: (f64, f64),
    prior: &dyn Fn(f64) -> f64,
) -> Result<PosteriorMean> {
    let lik = LocalizedLikelihood::new(spec, z, eta, interval)?;
    let f = |c| lik.eval(c);
    let top = maximize_two_sided(&f, interval, OptimOptions::default())?;
    posterior_mean(&f, prior, interval, top.value, QuadOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationDiagnostics {
    pub eta_n: f64,
    /// `r_n^{-1} eta_n`.
    pub rate_scale: f64,
    pub evaluations: usize,
    pub qbe_error_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub c_hat: f64,
    pub c_tilde: f64,
    pub rescaled_hat: f64,
    pub rescaled_tilde: f64,
    pub loglik_at_hat: f64,
    pub diagnostics: EstimationDiagnostics,
}

/// QMLE and QBE from one likelihood surface, rescaled by `r_n^{-1} eta_n`.
pub fn estimate(
    spec: &ModelSpec,
    z: &[f64],
    eta: f64,
    interval: (f64, f64),
    c_true: f64,
    prior: &dyn Fn(f64) -> f64,
) -> Result<EstimationResult> {
    let rate_scale = eta / classify_regime(spec)?.rate;
    let lik = LocalizedLikelihood::new(spec, z, eta, interval)?;
    let f = |c| lik.eval(c);
    let top = maximize_two_sided(&f, interval, OptimOptions::default())?;
    let post = posterior_mean(&f, prior, interval, top.value, QuadOptions::default())?;
    Ok(EstimationResult {
        c_hat: top.arg,
        c_tilde: post.mean,
        rescaled_hat: rate_scale * (top.arg - c_true),
        rescaled_tilde: rate_scale * (post.mean - c_true),
        loglik_at_hat: top.value,
        diagnostics: EstimationDiagnostics {
            eta_n: eta,
            rate_scale,
            evaluations: lik.evaluations(),
            qbe_error_estimate: post.error_estimate,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::sample;
    use crate::structure::{build_structures, exact_covariance, surrogate_covariance};
    use nalgebra::DMatrix;

    fn finite(n: usize, rho: f64, v: f64) -> ModelSpec {
        ModelSpec::new(n, rho, v, GammaMode::Finite(v * n as f64)).unwrap()
    }

    #[test]
    fn two_by_two_value() {
        let spec = ModelSpec::noiseless(1, 0.5).unwrap();
        let l = loglik(&spec, &[0.0, 0.0], 0.0, CovKind::ExactC).unwrap();
        let want = -(2.0 * std::f64::consts::PI).ln() - 0.5 * 0.75f64.ln();
        assert!((l - want).abs() < 1e-14);
    }

    #[test]
    fn banded_matches_dense_density() {
        let spec = finite(9, -0.4, 0.03);
        let z = &sample(&spec, CovKind::ExactC, 7, 1).unwrap().data[0];
        for theta in [0.0, 0.05, -0.08, 0.3, -0.45] {
            let s = spec.clone().with_theta(theta);
            let dense = exact_covariance(&s).unwrap().log_density(z).unwrap();
            let band = loglik(&spec, z, theta, CovKind::ExactC).unwrap();
            assert!(
                (dense - band).abs() < 1e-9 * dense.abs().max(1.0),
                "{theta}"
            );
            if spec.in_theta_domain(theta) {
                let dense = surrogate_covariance(&s).unwrap().log_density(z).unwrap();
                let sur = loglik(&spec, z, theta, CovKind::SurrogateCtilde).unwrap();
                let dv = loglik(&spec, z, theta, CovKind::DifferencedV).unwrap();
                assert!((dense - sur).abs() < 1e-9 * dense.abs().max(1.0));
                assert!((dense - dv).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn swap_symmetry() {
        let spec = finite(12, 0.6, 0.02);
        let z = &sample(&spec, CovKind::ExactC, 8, 1).unwrap().data[0];
        let swapped: Vec<f64> = z[12..].iter().chain(&z[..12]).cloned().collect();
        for theta in [0.02, 0.06] {
            for kind in [CovKind::SurrogateCtilde, CovKind::ExactC] {
                let a = loglik(&spec, z, theta, kind).unwrap();
                let b = loglik(&spec, &swapped, -theta, kind).unwrap();
                assert!((a - b).abs() < 1e-9, "{kind} {theta}");
            }
        }
    }

    #[test]
    fn non_pd_reports_theta() {
        // noiseless surrogate on the domain edge is singular
        let spec = ModelSpec::noiseless(4, 0.5).unwrap();
        let z = vec![0.1; 8];
        match loglik(&spec, &z, 0.25, CovKind::SurrogateCtilde) {
            Err(LagError::NotPositiveDefinite { theta, .. }) => assert_eq!(theta, 0.25),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            loglik(&spec, &z[..6], 0.0, CovKind::ExactC),
            Err(LagError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn traces_two_ways() {
        for spec in [
            finite(17, 0.7, 0.01),
            ModelSpec::noiseless(30, -0.3).unwrap(),
        ] {
            let s = build_structures(&spec);
            let inv = s.gbar.clone().try_inverse().unwrap();
            let tr_t = (&inv * &s.tbar).trace();
            let tr_s = (&inv * &s.sbar).trace();
            let chol = s.gbar.clone().cholesky().unwrap();
            let tr_s_solve = chol.solve(&s.sbar).trace();
            let tr_t_solve = chol.solve(&s.tbar).trace();
            let ctx = LanContext::new(&spec).unwrap();
            let (t, sv) = ctx.traces();
            assert!(tr_t.abs() < 1e-8 && tr_t_solve.abs() < 1e-8 && t == 0.0);
            assert!((tr_s - tr_s_solve).abs() < 1e-8 * tr_s.abs());
            assert!((tr_s - sv).abs() < 1e-8 * tr_s.abs());
        }
    }

    #[test]
    fn stats_match_dense_formula() {
        let spec = finite(11, 0.5, 0.04);
        let z = &sample(&spec, CovKind::ExactC, 9, 1).unwrap().data[0];
        let s = build_structures(&spec);
        let zt = nalgebra::DVector::from_column_slice(&difference_blocks(z));
        let w = s.gbar.clone().cholesky().unwrap().solve(&zt);
        let inv: DMatrix<f64> = s.gbar.clone().try_inverse().unwrap();
        let r = (11f64).powf(-1.5);
        let t = -0.25 * r * (w.dot(&(&s.tbar * &w)) - (&inv * &s.tbar).trace());
        let sv = -0.25 * r * (w.dot(&(&s.sbar * &w)) - (&inv * &s.sbar).trace());
        let st = lan_stats(&spec, z).unwrap();
        assert!((st.t_n - t).abs() < 1e-10 * t.abs().max(1.0));
        assert!((st.s_n - sv).abs() < 1e-10 * sv.abs().max(1.0));
    }

    #[test]
    fn stats_are_centered() {
        let spec = finite(64, 0.5, 1.0 / 64.0);
        let ctx = LanContext::new(&spec).unwrap();
        let m = 10_000;
        let b = sample(&spec, CovKind::SurrogateCtilde, 10, m).unwrap();
        let st: Vec<LanStats> = b.data.iter().map(|z| ctx.stats(z).unwrap()).collect();
        for pick in [|s: &LanStats| s.t_n, |s: &LanStats| s.s_n] {
            let xs: Vec<f64> = st.iter().map(pick).collect();
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            assert!(mean.abs() < 4.0 * (var / m as f64).sqrt(), "{mean} {var}");
        }
    }

    #[test]
    fn score_orientation() {
        // the log-likelihood ratio must move with u T_n + |u| S_n, not against it
        let spec = ModelSpec::noiseless(128, 0.5).unwrap();
        let ctx = LanContext::new(&spec).unwrap();
        let b = sample(&spec, CovKind::ExactC, 14, 400).unwrap();
        let (mut cov, mut var) = (0.0, 0.0);
        for z in &b.data {
            let zt = differenced_data(&spec, z).unwrap();
            let llr = loglik_differenced(&spec, &zt, ctx.rate, CovKind::ExactC).unwrap()
                - loglik_differenced(&spec, &zt, 0.0, CovKind::ExactC).unwrap();
            let st = ctx.stats_differenced(&zt).unwrap();
            cov += llr * (st.t_n + st.s_n);
            var += (st.t_n + st.s_n).powi(2);
        }
        assert!(cov / var > 0.8, "{}", cov / var);
    }

    #[test]
    fn residual_at_zero_is_zero() {
        let spec = ModelSpec::noiseless(32, 0.5).unwrap();
        let z = &sample(&spec, CovKind::ExactC, 11, 1).unwrap().data[0];
        let ctx = LanContext::new(&spec).unwrap();
        assert_eq!(ctx.residual(z, 0.0, CovKind::ExactC).unwrap(), 0.0);
    }

    #[test]
    fn residual_sign_symmetry() {
        let spec = finite(40, 0.5, 0.01);
        let z = &sample(&spec, CovKind::ExactC, 12, 1).unwrap().data[0];
        let ctx = LanContext::new(&spec).unwrap();
        let st = ctx.stats(z).unwrap();
        let zt = differenced_data(&spec, z).unwrap();
        let theta = -ctx.rate;
        let llr = loglik_differenced(&spec, &zt, theta, CovKind::ExactC).unwrap()
            - loglik_differenced(&spec, &zt, 0.0, CovKind::ExactC).unwrap();
        let want = llr - (-st.t_n + st.s_n - 0.5 * (st.i + st.j));
        let got = ctx.residual(z, -1.0, CovKind::ExactC).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn hellinger_basics() {
        let spec = finite(10, 0.4, 0.02).with_theta(0.07);
        let c = exact_covariance(&spec).unwrap();
        assert_eq!(hellinger(&c, &c).unwrap(), 0.0);
        // scalar case: N(0,1) vs N(0,4), BC = sqrt(2*1*2/5)
        let a = CovarianceModel {
            kind: CovKind::ExactC,
            theta: 0.0,
            matrix: DMatrix::from_element(1, 1, 1.0),
        };
        let b = CovarianceModel {
            matrix: DMatrix::from_element(1, 1, 4.0),
            ..a.clone()
        };
        let want = 2.0 * (1.0 - (4.0f64 / 5.0).sqrt());
        assert!((hellinger_sq(&a, &b).unwrap() - want).abs() < 1e-14);
        let bad = CovarianceModel {
            matrix: DMatrix::from_element(1, 1, -1.0),
            ..a.clone()
        };
        assert!(hellinger_sq(&a, &bad).is_err());
        assert!(hellinger_sq(&bad, &a).is_err());
    }

    #[test]
    fn eta_rules() {
        let spec = ModelSpec::noiseless(2048, 0.5).unwrap();
        let e = eta_for(&spec, EtaRule::Default, DEFAULT_C_INTERVAL).unwrap();
        assert!((e - 1.0 / (2048.0 * 2048f64.ln())).abs() < 1e-18);
        let spec = ModelSpec::noise_dominated(2048, 0.5, 0.25).unwrap();
        let e = eta_for(&spec, EtaRule::Default, DEFAULT_C_INTERVAL).unwrap();
        let big_n = (2048.0f64 / 0.25).sqrt();
        assert!((e - big_n.powf(-4.0 / 3.0) / 2048f64.ln()).abs() < 1e-15);
        let e = eta_for(&spec, EtaRule::FillDomain, DEFAULT_C_INTERVAL).unwrap();
        assert!(spec.in_theta_domain(5.0 * e) && !spec.in_theta_domain(5.2 * e));
        assert!(eta_for(&spec, EtaRule::Fixed(-1.0), DEFAULT_C_INTERVAL).is_err());
    }

    #[test]
    fn two_sided_maximizer_finds_kinked_peak() {
        let f = |c: f64| -(c - 1.3).powi(2) - 2.0 * c.abs();
        let m = maximize_two_sided(&f, (-5.0, 5.0), OptimOptions::default()).unwrap();
        assert!((m.arg - 0.3).abs() < 1e-7);
        // maximum at the kink
        let f = |c: f64| -3.0 * c.abs() + 0.5 * c;
        let m = maximize_two_sided(&f, (-5.0, 5.0), OptimOptions::default()).unwrap();
        assert!(m.arg.abs() < 1e-8);
        // maximum on the boundary of the closure
        let f = |c: f64| c;
        let m = maximize_two_sided(&f, (-5.0, 5.0), OptimOptions::default()).unwrap();
        assert_eq!(m.arg, 5.0);
        assert!(maximize_two_sided(&|_| f64::NAN, (-1.0, 1.0), OptimOptions::default()).is_err());
    }

    #[test]
    fn symmetric_likelihood_posterior_mean() {
        for c0 in [0.0, 0.7, -1.9] {
            let f = move |c: f64| -4.0 * (c - c0).powi(2);
            let p = posterior_mean(
                &f,
                &uniform_prior,
                (c0 - 3.0, c0 + 3.0),
                0.0,
                QuadOptions::default(),
            )
            .unwrap();
            assert!((p.mean - c0).abs() < 1e-9, "{c0} {}", p.mean);
        }
    }

    #[test]
    fn posterior_mean_of_truncated_normal() {
        // N(0.5, 1) truncated to (-1, 2): mean = 0.5 + (phi(-1.5) - phi(1.5)) / (Phi(1.5) - Phi(-1.5))
        let f = |c: f64| -0.5 * (c - 0.5).powi(2);
        let p =
            posterior_mean(&f, &uniform_prior, (-1.0, 2.0), 0.0, QuadOptions::default()).unwrap();
        assert!((p.mean - 0.5).abs() < 1e-10);
        let f = |c: f64| -0.5 * (c - 1.0).powi(2);
        let p =
            posterior_mean(&f, &uniform_prior, (-1.0, 2.0), 0.0, QuadOptions::default()).unwrap();
        // phi(-2) - phi(1) over Phi(1) - Phi(-2)
        let want = 1.0
            + (0.053_990_966_513_188_06 - 0.241_970_724_519_143_37)
                / (0.841_344_746_068_542_9 - 0.022_750_131_948_179_2);
        assert!((p.mean - want).abs() < 1e-9, "{} {want}", p.mean);
    }

    #[test]
    fn estimator_on_small_problem() {
        let spec = ModelSpec::noiseless(256, 0.5).unwrap();
        let eta = eta_for(&spec, EtaRule::Default, DEFAULT_C_INTERVAL).unwrap();
        let z = &sample(&spec, CovKind::ExactC, 13, 1).unwrap().data[0];
        let r = estimate(&spec, z, eta, DEFAULT_C_INTERVAL, 0.0, &uniform_prior).unwrap();
        assert!(r.c_hat >= -5.0 && r.c_hat <= 5.0);
        assert!(r.c_tilde > -5.0 && r.c_tilde < 5.0);
        let lik = LocalizedLikelihood::new(&spec, z, eta, DEFAULT_C_INTERVAL).unwrap();
        let g = grid_maximize(&|c| lik.eval(c), DEFAULT_C_INTERVAL, 1e-3).unwrap();
        assert!(r.loglik_at_hat >= g.value - 1e-9);
        assert!((r.c_hat - g.arg).abs() < 2e-3);
        let q = qbe(&spec, z, eta, DEFAULT_C_INTERVAL, &uniform_prior).unwrap();
        assert!((q.mean - r.c_tilde).abs() < 1e-12);
        let f = |c| lik.eval(c);
        let a =
            posterior_mean_composite(&f, &uniform_prior, DEFAULT_C_INTERVAL, r.loglik_at_hat, 400)
                .unwrap();
        let b =
            posterior_mean_composite(&f, &uniform_prior, DEFAULT_C_INTERVAL, r.loglik_at_hat, 800)
                .unwrap();
        assert!((a.mean - b.mean).abs() < 1e-6);
        assert!((b.mean - r.c_tilde).abs() < 1e-6);
    }

    #[test]
    fn assembled_covariance_matches_entrywise_builder() {
        let spec = finite(20, -0.35, 0.02);
        let z = vec![0.0; 40];
        let lik = LocalizedLikelihood::new(&spec, &z, 0.01, DEFAULT_C_INTERVAL).unwrap();
        for c in [-4.0, -0.3, 0.0, 0.7, 5.0] {
            let a = lik.covariance(c).to_dense();
            let b = banded_differenced(&spec, c * 0.01, CovKind::DifferencedV)
                .unwrap()
                .to_dense();
            assert!((a - b).abs().max() < 1e-15, "{c}");
        }
    }

    #[test]
    fn localization_outside_domain_is_rejected() {
        let spec = ModelSpec::noiseless(100, 0.5).unwrap();
        let z = vec![0.0; 200];
        assert!(matches!(
            LocalizedLikelihood::new(&spec, &z, 0.01, DEFAULT_C_INTERVAL),
            Err(LagError::LagOutOfDomain { .. })
        ));
    }
}
