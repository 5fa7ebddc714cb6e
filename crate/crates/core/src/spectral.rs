//! DCT-VIII diagonalization of the difference operator, the spectral
//! functions `f_a`, `g_a`, the closed-form limit constants and numerical
//! checks of the Frobenius-norm limits.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LagError, Result};
use crate::structure::{build_structures, check_rho, GammaMode, ModelSpec};

/// Grid `xi_i = pi (i - 1/2) / (2n + 1)`, 0-based storage.
fn xi_grid(n: usize) -> Vec<f64> {
    let h = PI / (2 * n + 1) as f64;
    (1..=n).map(|i| h * (i as f64 - 0.5)).collect()
}

/// First column of `U`, `u_i1 = 2 cos(xi_i) / sqrt(2n + 1)`.
fn first_column(xi: &[f64]) -> Vec<f64> {
    let scale = 2.0 / ((2 * xi.len() + 1) as f64).sqrt();
    xi.iter().map(|x| scale * x.cos()).collect()
}

fn eigenvalues(xi: &[f64]) -> Vec<f64> {
    xi.iter().map(|x| 2.0 * (1.0 - (2.0 * x).cos())).collect()
}

#[derive(Debug, Clone)]
pub struct DctBasis {
    pub n: usize,
    pub xi: Vec<f64>,
    pub u: DMatrix<f64>,
    pub lambda: Vec<f64>,
}

pub fn dct_basis(n: usize) -> DctBasis {
    let xi = xi_grid(n);
    let scale = 2.0 / ((2 * n + 1) as f64).sqrt();
    let u = DMatrix::from_fn(n, n, |i, j| scale * (xi[i] * (2 * j + 1) as f64).cos());
    let lambda = eigenvalues(&xi);
    DctBasis { n, xi, u, lambda }
}

/// `f_a(x) = a/n + 2 v_n (1 - cos x)` and `g_a = sin / f_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFns {
    pub a: f64,
    pub n: usize,
    pub v_n: f64,
}

impl SpectralFns {
    pub fn new(a: f64, n: usize, v_n: f64) -> Self {
        Self { a, n, v_n }
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        self.a / self.n as f64 + 2.0 * self.v_n * (1.0 - x.cos())
    }

    #[inline]
    pub fn g(&self, x: f64) -> f64 {
        x.sin() / self.f(x)
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        let h = self.a / self.n as f64;
        ((h + 2.0 * self.v_n) * x.cos() - 2.0 * self.v_n) / self.f(x).powi(2)
    }

    /// `sup_{[0, pi]} g_a`.
    pub fn sup_g(&self) -> f64 {
        let h = self.a / self.n as f64;
        1.0 / (h * h + 4.0 * h * self.v_n).sqrt()
    }

    /// `f_a(2 xi_i)` for `i = 1..n`, i.e. the spectrum of `G_n(a)`.
    pub fn spectrum(&self) -> Vec<f64> {
        xi_grid(self.n).iter().map(|x| self.f(2.0 * x)).collect()
    }
}

/// `s(a) = sqrt(a (a + 4 gamma)) + a + 2 gamma`, so that
/// `1 / s(a) = (a + 2 gamma - sqrt(a (a + 4 gamma))) / (4 gamma^2)` without cancellation.
fn s_fn(a: f64, gamma: f64) -> f64 {
    (a * (a + 4.0 * gamma)).sqrt() + a + 2.0 * gamma
}

/// `J^0_gamma(a)`.
pub fn j0(mode: GammaMode, a: f64) -> f64 {
    match mode {
        GammaMode::Zero => 6.0 / (a * a),
        GammaMode::Finite(g) => {
            // 2 - 3q + q^3 = (1 - q)^2 (2 + q) and (1 - q)(1 + q) = 4 gamma / (a + 4 gamma)
            let q = (a / (a + 4.0 * g)).sqrt();
            8.0 * (2.0 + q) / ((a + 4.0 * g).powi(2) * (1.0 + q).powi(2))
        }
        GammaMode::Infinite => 0.0,
    }
}

/// Limiting information constants `(I_gamma, J_gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    pub gamma: GammaMode,
    pub rho: f64,
    pub i: f64,
    pub j: f64,
}

impl LimitConstants {
    pub fn j0(&self, a: f64) -> f64 {
        j0(self.gamma, a)
    }

    pub fn total(&self) -> f64 {
        self.i + self.j
    }
}

pub fn limit_constants(gamma: GammaMode, rho: f64) -> Result<LimitConstants> {
    check_rho(rho)?;
    gamma.validate()?;
    let i = match gamma {
        GammaMode::Zero => rho * rho / (2.0 * (1.0 - rho * rho)),
        GammaMode::Finite(g) => 0.5 * rho * (1.0 / s_fn(1.0 - rho, g) - 1.0 / s_fn(1.0 + rho, g)),
        GammaMode::Infinite => rho * rho / (2.0 * ((1.0 + rho).sqrt() + (1.0 - rho).sqrt())),
    };
    let j = rho * rho * (j0(gamma, 1.0 + rho) + j0(gamma, 1.0 - rho)) / 8.0;
    Ok(LimitConstants { gamma, rho, i, j })
}

/// Limit of `r_n^2 ||G(a)^{-1/2} T G(b)^{-1/2}||_F^2`.
pub fn lemma_t_limit(mode: GammaMode, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Err(LagError::Domain(format!(
            "lag-operator limit needs a != b, got a = b = {a}"
        )));
    }
    Ok(match mode {
        GammaMode::Zero => 2.0 / (a * b),
        GammaMode::Finite(g) => {
            let pa = (a * (a + 4.0 * g)).sqrt();
            let pb = (b * (b + 4.0 * g)).sqrt();
            4.0 * (1.0 / s_fn(a, g) + 1.0 / s_fn(b, g)) / (pa + pb)
        }
        GammaMode::Infinite => 2.0 / (a.sqrt() + b.sqrt()),
    })
}

fn tan_half_pi(c: f64) -> f64 {
    if c >= 1.0 {
        f64::INFINITY
    } else {
        (0.5 * PI * c).tan()
    }
}

/// Limit of `(n N_n)^{-1} sum_{i <= c n} 1 / f_a(2 xi_i)`.
pub fn inverse_sum_limit(mode: GammaMode, a: f64, c: f64) -> f64 {
    match mode {
        GammaMode::Infinite => 0.5 / a.sqrt(),
        _ => {
            let g = mode.value();
            let p = (a * (a + 4.0 * g)).sqrt();
            2.0 / (PI * p) * ((1.0 + 4.0 * g / a).sqrt() * tan_half_pi(c)).atan()
        }
    }
}

/// Limit of `r_n^2 sum_{i <= c n} g_a(2 xi_i) g_b(2 xi_i)`.
pub fn product_sum_limit(mode: GammaMode, a: f64, b: f64, c: f64) -> Result<f64> {
    if a == b {
        return Err(LagError::Domain(format!(
            "product-sum limit needs a != b, got a = b = {a}"
        )));
    }
    Ok(match mode {
        GammaMode::Zero => (c - (2.0 * PI * c).sin() / (2.0 * PI)) / (2.0 * a * b),
        GammaMode::Finite(g) => {
            let t = tan_half_pi(c);
            let pa = (a * (a + 4.0 * g)).sqrt();
            let pb = (b * (b + 4.0 * g)).sqrt();
            let ta = ((1.0 + 4.0 * g / a).sqrt() * t).atan();
            let tb = ((1.0 + 4.0 * g / b).sqrt() * t).atan();
            (pb * tb - pa * ta) / (2.0 * PI * g * g * (b - a)) - c / (4.0 * g * g)
        }
        GammaMode::Infinite => 0.5 / (a.sqrt() + b.sqrt()),
    })
}

/// `U (T + R) U` from its closed form.
pub fn lag_operator_dct(n: usize) -> DMatrix<f64> {
    let xi = xi_grid(n);
    let nf = n as f64;
    let scale = 4.0 / (2 * n + 1) as f64;
    // the trigonometric sum is indexed by the column
    DMatrix::from_fn(n, n, |i, j| {
        let sp = xi[i] + xi[j];
        let mut v = (nf * sp).sin().powi(2) / sp.sin();
        if i != j {
            let sm = xi[j] - xi[i];
            v += (nf * sm).sin().powi(2) / sm.sin();
        }
        scale * (2.0 * xi[j]).sin() * v
    })
}

/// Squared Frobenius norm of `D + c w w^T` with `D = diag(d)`.
fn diag_rank_one_frob_sq(d: &[f64], w: &[f64], c: f64) -> f64 {
    let dd: f64 = d.iter().map(|x| x * x).sum();
    let dw: f64 = d.iter().zip(w).map(|(x, y)| x * y * y).sum();
    let ww: f64 = w.iter().map(|y| y * y).sum();
    dd + 2.0 * c * dw + c * c * ww * ww
}

/// `Gbar^{-1/2} (alpha Tbar + beta Sbar) Gbar^{-1/2}` in the block-DCT basis.
///
/// With `G_pm = G(1 +- rho)` diagonalized by `U`, the operator is orthogonally
/// similar to half of
/// `[[beta L+ (Lam + 2 u u^T) L+, alpha K], [alpha K^T, -beta L- Lam L-]]`
/// where `K = L+ U (T + R) U L-` and `L_pm = Lam(1 +- rho)^{-1/2}`.
#[derive(Debug, Clone)]
pub struct BlockDct {
    pub n: usize,
    lambda: Vec<f64>,
    u1: Vec<f64>,
    f_plus: Vec<f64>,
    f_minus: Vec<f64>,
    k: DMatrix<f64>,
}

impl BlockDct {
    pub fn new(spec: &ModelSpec) -> Self {
        let n = spec.n;
        let xi = xi_grid(n);
        let lambda = eigenvalues(&xi);
        let u1 = first_column(&xi);
        let f_plus = SpectralFns::new(1.0 + spec.rho, n, spec.v_n).spectrum();
        let f_minus = SpectralFns::new(1.0 - spec.rho, n, spec.v_n).spectrum();
        let mut k = lag_operator_dct(n);
        for j in 0..n {
            for i in 0..n {
                k[(i, j)] /= (f_plus[i] * f_minus[j]).sqrt();
            }
        }
        Self {
            n,
            lambda,
            u1,
            f_plus,
            f_minus,
            k,
        }
    }

    /// `||G+^{-1/2} (T + R) G-^{-1/2}||_F^2`.
    pub fn lag_frob_sq(&self) -> f64 {
        self.k.norm_squared()
    }

    /// `||G+^{-1/2} (S + R) G+^{-1/2}||_F^2`.
    pub fn sym_plus_frob_sq(&self) -> f64 {
        let d: Vec<f64> = self
            .lambda
            .iter()
            .zip(&self.f_plus)
            .map(|(l, f)| l / f)
            .collect();
        let w: Vec<f64> = self
            .u1
            .iter()
            .zip(&self.f_plus)
            .map(|(u, f)| u / f.sqrt())
            .collect();
        diag_rank_one_frob_sq(&d, &w, 2.0)
    }

    /// `||G-^{-1/2} (S - R) G-^{-1/2}||_F^2`.
    pub fn sym_minus_frob_sq(&self) -> f64 {
        self.lambda
            .iter()
            .zip(&self.f_minus)
            .map(|(l, f)| (l / f).powi(2))
            .sum()
    }

    /// `||Gbar^{-1/2} (alpha Tbar + beta Sbar) Gbar^{-1/2}||_F^2`.
    pub fn frob_sq(&self, alpha: f64, beta: f64) -> f64 {
        0.25 * (2.0 * alpha * alpha * self.lag_frob_sq()
            + beta * beta * (self.sym_plus_frob_sq() + self.sym_minus_frob_sq()))
    }

    fn apply(&self, alpha: f64, beta: f64, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let (xp, xm) = x.split_at(n);
        let mut y = vec![0.0; 2 * n];
        // upper block: beta (D+ + 2 w w^T) xp + alpha K xm
        let w: Vec<f64> = self
            .u1
            .iter()
            .zip(&self.f_plus)
            .map(|(u, f)| u / f.sqrt())
            .collect();
        let wx: f64 = w.iter().zip(xp).map(|(a, b)| a * b).sum();
        for i in 0..n {
            y[i] = beta * (self.lambda[i] / self.f_plus[i] * xp[i] + 2.0 * w[i] * wx);
            y[n + i] = -beta * self.lambda[i] / self.f_minus[i] * xm[i];
        }
        if alpha != 0.0 {
            let kx = &self.k * nalgebra::DVector::from_column_slice(xm);
            let ktx = self.k.tr_mul(&nalgebra::DVector::from_column_slice(xp));
            for i in 0..n {
                y[i] += alpha * kx[i];
                y[n + i] += alpha * ktx[i];
            }
        }
        y.iter_mut().for_each(|v| *v *= 0.5);
        y
    }

    /// Spectral norm by Lanczos with full reorthogonalization.
    pub fn spectral_norm(&self, alpha: f64, beta: f64) -> f64 {
        let dim = 2 * self.n;
        let steps = dim.min(120);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut diag = Vec::with_capacity(steps);
        let mut off: Vec<f64> = Vec::with_capacity(steps);
        let mut q: Vec<f64> = (0..dim).map(|k| 1.0 + 0.37 * (k as f64).sin()).collect();
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        q.iter_mut().for_each(|v| *v /= norm);
        for _ in 0..steps {
            let mut w = self.apply(alpha, beta, &q);
            let a: f64 = w.iter().zip(&q).map(|(x, y)| x * y).sum();
            diag.push(a);
            basis.push(q);
            for _ in 0..2 {
                for b in &basis {
                    let c: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let beta_k = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if beta_k <= 1e-12 * diag.iter().fold(1e-300f64, |m, d| m.max(d.abs())) {
                break;
            }
            off.push(beta_k);
            q = w.into_iter().map(|v| v / beta_k).collect();
        }
        let k = diag.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                diag[i]
            } else if i.abs_diff(j) == 1 {
                off[i.min(j)]
            } else {
                0.0
            }
        });
        nalgebra::SymmetricEigen::new(t)
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, e| m.max(e.abs()))
    }
}

/// `tr(Gbar^{-1} Sbar)` from the block-DCT spectrum.
///
/// `tr(Gbar^{-1} Tbar)` vanishes identically: `Tbar` only couples the two
/// decoupled blocks.
pub fn sbar_trace(spec: &ModelSpec) -> f64 {
    let n = spec.n;
    let xi = xi_grid(n);
    let lambda = eigenvalues(&xi);
    let u1 = first_column(&xi);
    let f_plus = SpectralFns::new(1.0 + spec.rho, n, spec.v_n).spectrum();
    let f_minus = SpectralFns::new(1.0 - spec.rho, n, spec.v_n).spectrum();
    let mut tr = 0.0;
    for i in 0..n {
        tr += (lambda[i] + 2.0 * u1[i] * u1[i]) / f_plus[i] - lambda[i] / f_minus[i];
    }
    0.5 * tr
}

/// `||Gbar^{-1/2} A Gbar^{-1/2}||_F^2` for `A = alpha Tbar + beta Sbar`, dense.
pub fn dense_frob_sq(spec: &ModelSpec, alpha: f64, beta: f64) -> Result<f64> {
    let s = build_structures(spec);
    let a = &s.tbar * alpha + &s.sbar * beta;
    let chol = s
        .gbar
        .clone()
        .cholesky()
        .ok_or(LagError::NotPositiveDefinite {
            theta: 0.0,
            index: 0,
            pivot: f64::NAN,
        })?;
    let l = chol.l();
    let x1 = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| LagError::Domain("singular factor".into()))?;
    let x = l
        .solve_lower_triangular(&x1.transpose())
        .ok_or_else(|| LagError::Domain("singular factor".into()))?;
    Ok(x.norm_squared())
}

/// Relative error, or absolute error when the target is zero.
pub fn rel_err(value: f64, target: f64) -> f64 {
    if target == 0.0 {
        value.abs()
    } else {
        ((value - target) / target).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusReport {
    pub n: usize,
    pub v_n: f64,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    /// `N_n^{-1} ||Gbar^{-1/2} (alpha Tbar + beta Sbar) Gbar^{-1/2}||_sp`.
    pub scaled_spectral_norm: f64,
}

/// Compares `rho^2 r_n^2 ||Gbar^{-1/2}(alpha Tbar + beta Sbar)Gbar^{-1/2}||_F^2`
/// with `2 (alpha^2 I + beta^2 J)` through the block-DCT reduction.
pub fn frobenius_limit_check(spec: &ModelSpec, alpha: f64, beta: f64) -> Result<FrobeniusReport> {
    let block = BlockDct::new(spec);
    frobenius_limit_check_with(spec, &block, alpha, beta)
}

/// As [`frobenius_limit_check`], reusing a precomputed [`BlockDct`].
pub fn frobenius_limit_check_with(
    spec: &ModelSpec,
    block: &BlockDct,
    alpha: f64,
    beta: f64,
) -> Result<FrobeniusReport> {
    spec.validate()?;
    let regime = spec.regime()?;
    let consts = limit_constants(spec.gamma_mode, spec.rho)?;
    let lhs = spec.rho.powi(2) * regime.rate.powi(2) * block.frob_sq(alpha, beta);
    let rhs = 2.0 * (alpha * alpha * consts.i + beta * beta * consts.j);
    Ok(FrobeniusReport {
        n: spec.n,
        v_n: spec.v_n,
        rho: spec.rho,
        alpha,
        beta,
        lhs,
        rhs,
        rel_err: rel_err(lhs, rhs),
        scaled_spectral_norm: block.spectral_norm(alpha, beta) / regime.effective_n,
    })
}

/// Parameters of [`lemma_diagnostics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaParams {
    pub a: f64,
    pub b: f64,
    /// Fraction `m_n / n` of the spectrum summed.
    pub c: f64,
}

impl Default for LemmaParams {
    fn default() -> Self {
        Self {
            a: 1.5,
            b: 0.5,
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRecord {
    pub lemma_id: String,
    pub n: usize,
    pub value: f64,
    /// `None` when only boundedness is claimed.
    pub limit: Option<f64>,
    pub rel_err: Option<f64>,
}

impl LemmaRecord {
    fn new(id: &str, n: usize, value: f64, limit: Option<f64>) -> Self {
        Self {
            lemma_id: id.to_string(),
            n,
            value,
            limit,
            rel_err: limit.map(|l| rel_err(value, l)),
        }
    }
}

/// `(4/(2n+1))^2 sum_{i <= m} sin^4(2 n xi_1 i) / sin^2(2 xi_1 i)`.
pub fn sine_power_sum(n: usize, m: usize) -> f64 {
    let step = PI / (2 * n + 1) as f64; // 2 xi_1
    let nf = n as f64;
    let s: f64 = (1..=m)
        .map(|i| {
            let x = step * i as f64;
            (nf * x).sin().powi(4) / x.sin().powi(2)
        })
        .sum();
    (4.0 / (2 * n + 1) as f64).powi(2) * s
}

/// `||G(a)^{-1/2} S G(a)^{-1/2}||_F^2` through `U S U = diag(lambda) + u u^T`.
pub fn sym_operator_frob_sq(n: usize, v_n: f64, a: f64) -> f64 {
    let xi = xi_grid(n);
    let lambda = eigenvalues(&xi);
    let u1 = first_column(&xi);
    let f = SpectralFns::new(a, n, v_n).spectrum();
    let d: Vec<f64> = lambda.iter().zip(&f).map(|(l, f)| l / f).collect();
    let w: Vec<f64> = u1.iter().zip(&f).map(|(u, f)| u / f.sqrt()).collect();
    diag_rank_one_frob_sq(&d, &w, 1.0)
}

/// `||G(a)^{-1/2} T G(b)^{-1/2}||_F^2` through `U T U = U (T + R) U - u u^T`.
pub fn lag_operator_frob_sq(n: usize, v_n: f64, a: f64, b: f64) -> f64 {
    let xi = xi_grid(n);
    let u1 = first_column(&xi);
    let fa = SpectralFns::new(a, n, v_n).spectrum();
    let fb = SpectralFns::new(b, n, v_n).spectrum();
    let m = lag_operator_dct(n);
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            let e = m[(i, j)] - u1[i] * u1[j];
            s += e * e / (fa[i] * fb[j]);
        }
    }
    s
}

/// Finite-`n` quantities of the spectral lemmas next to their limits.
pub fn lemma_diagnostics(spec: &ModelSpec, params: LemmaParams) -> Result<Vec<LemmaRecord>> {
    spec.validate()?;
    let LemmaParams { a, b, c } = params;
    if !(a > 0.0 && b > 0.0) || !(c > 0.0 && c <= 1.0) {
        return Err(LagError::Domain(format!(
            "lemma diagnostics need a, b > 0 and c in (0, 1], got a = {a}, b = {b}, c = {c}"
        )));
    }
    let regime = spec.regime()?;
    let mode = spec.gamma_mode;
    let n = spec.n;
    let v = spec.v_n;
    let nn = regime.effective_n;
    let r2 = regime.rate.powi(2);
    let m = ((c * n as f64).round() as usize).clamp(1, n);
    let xi = xi_grid(n);
    let fa = SpectralFns::new(a, n, v);
    let fb = SpectralFns::new(b, n, v);
    let mut out = Vec::new();

    // sup of g_a on a fine grid
    let grid = 20_000;
    let sup_num = (0..=grid)
        .map(|k| fa.g(PI * k as f64 / grid as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(LemmaRecord::new(
        "calculus_sup_g",
        n,
        sup_num,
        Some(fa.sup_g()),
    ));

    let inv: f64 = xi[..m].iter().map(|x| 1.0 / fa.f(2.0 * x)).sum();
    out.push(LemmaRecord::new(
        "inverse_sum",
        n,
        inv / (n as f64 * nn),
        Some(inverse_sum_limit(mode, a, c)),
    ));

    if a != b {
        let prod: f64 = xi[..m].iter().map(|x| fa.g(2.0 * x) * fb.g(2.0 * x)).sum();
        out.push(LemmaRecord::new(
            "product_sum",
            n,
            r2 * prod,
            Some(product_sum_limit(mode, a, b, c)?),
        ));
    }

    out.push(LemmaRecord::new(
        "sine_power_sum",
        n,
        sine_power_sum(n, m),
        Some(2.0),
    ));

    out.push(LemmaRecord::new(
        "sym_operator",
        n,
        r2 * sym_operator_frob_sq(n, v, a),
        Some(j0(mode, a)),
    ));

    if a != b {
        out.push(LemmaRecord::new(
            "lag_operator",
            n,
            r2 * lag_operator_frob_sq(n, v, a, b),
            Some(lemma_t_limit(mode, a, b)?),
        ));
    }

    let u1 = first_column(&xi);
    let qa: f64 = u1.iter().zip(fa.spectrum()).map(|(u, f)| u * u / f).sum();
    let qb: f64 = u1.iter().zip(fb.spectrum()).map(|(u, f)| u * u / f).sum();
    out.push(LemmaRecord::new(
        "first_row_operator",
        n,
        qa * qb / (nn * nn),
        None,
    ));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite(n: usize, rho: f64, gamma: f64) -> ModelSpec {
        ModelSpec::balanced(n, rho, gamma).unwrap()
    }

    #[test]
    fn dct_n1() {
        let b = dct_basis(1);
        assert!((b.xi[0] - PI / 6.0).abs() < 1e-15);
        assert!((b.u[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((b.lambda[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dct_diagonalizes_f() {
        for n in [1usize, 2, 3, 8, 33] {
            let b = dct_basis(n);
            let s = build_structures(&ModelSpec::noiseless(n, 0.5).unwrap());
            let eye = DMatrix::<f64>::identity(n, n);
            assert!((b.u.transpose() * &b.u - &eye).abs().max() < 1e-12);
            assert!((&b.u - b.u.transpose()).abs().max() < 1e-13);
            let d = &b.u * &s.f * &b.u;
            let want = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b.lambda.clone()));
            assert!((d - want).abs().max() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn lag_operator_closed_form_matches_product() {
        for n in [1usize, 2, 5, 16, 40] {
            let b = dct_basis(n);
            let s = build_structures(&ModelSpec::noiseless(n, 0.5).unwrap());
            let direct = &b.u * (&s.t + &s.r) * &b.u;
            let closed = lag_operator_dct(n);
            assert!((direct - closed).abs().max() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn sym_identities() {
        let n = 12;
        let b = dct_basis(n);
        let s = build_structures(&ModelSpec::noiseless(n, 0.5).unwrap());
        let u1 = b.u.column(0).clone_owned();
        let plus = &b.u * (&s.s + &s.r) * &b.u;
        let want = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b.lambda.clone()))
            + &u1 * u1.transpose() * 2.0;
        assert!((plus - want).abs().max() < 1e-12);
    }

    #[test]
    fn spectral_fns_lemma() {
        let f = SpectralFns::new(1.3, 50, 0.02);
        let grid: Vec<f64> = (0..=200_000).map(|k| PI * k as f64 / 200_000.0).collect();
        let sup = grid.iter().map(|x| f.g(*x)).fold(f64::MIN, f64::max);
        assert!((sup - f.sup_g()).abs() / f.sup_g() < 1e-6);
        let dsup = grid.iter().map(|x| f.g_prime(*x).abs()).fold(0.0, f64::max);
        assert!(dsup <= 3.0 * 50.0 / 1.3);
        // derivative by finite differences
        let h = 1e-6;
        let fd = (f.g(1.0 + h) - f.g(1.0 - h)) / (2.0 * h);
        assert!((fd - f.g_prime(1.0)).abs() < 1e-5 * fd.abs().max(1.0));
    }

    #[test]
    fn constants_examples() {
        let c = limit_constants(GammaMode::Zero, 0.5).unwrap();
        assert!((c.i - 1.0 / 6.0).abs() < 1e-15);
        assert!((c.j - 0.25 / 8.0 * (6.0 / 2.25 + 6.0 / 0.25)).abs() < 1e-14);
        let c = limit_constants(GammaMode::Infinite, 0.5).unwrap();
        assert_eq!(c.j, 0.0);
        assert!((c.i - 0.25 / (2.0 * (1.5f64.sqrt() + 0.5f64.sqrt()))).abs() < 1e-15);
        assert!((c.i - 0.0647).abs() < 1e-4);
        assert!(limit_constants(GammaMode::Zero, 0.0).is_err());
        assert!(limit_constants(GammaMode::Zero, 1.0).is_err());
    }

    #[test]
    fn finite_branch_matches_raw_formulas() {
        for &g in &[0.05, 0.7, 3.0, 40.0] {
            for &rho in &[0.3, -0.6, 0.9] {
                let c = limit_constants(GammaMode::Finite(g), rho).unwrap();
                let pp = ((1.0 + rho) * (1.0 + rho + 4.0 * g)).sqrt();
                let pm = ((1.0 - rho) * (1.0 - rho + 4.0 * g)).sqrt();
                let raw_i = rho * (pp - pm - 2.0 * rho) / (8.0 * g * g);
                assert!((c.i - raw_i).abs() < 1e-9 * raw_i.abs(), "g={g} rho={rho}");
                for a in [1.0 + rho, 1.0 - rho] {
                    let q = (a / (a + 4.0 * g)).sqrt();
                    let raw = (2.0 - 3.0 * q + q.powi(3)) / (2.0 * g * g);
                    assert!((j0(GammaMode::Finite(g), a) - raw).abs() < 1e-9 * raw);
                }
                let (a, b) = (1.0 + rho, 1.0 - rho);
                let pa = (a * (a + 4.0 * g)).sqrt();
                let pb = (b * (b + 4.0 * g)).sqrt();
                let raw_t = (pb - pa) / (g * g * (b - a)) - 1.0 / (g * g);
                let t = lemma_t_limit(GammaMode::Finite(g), a, b).unwrap();
                assert!((t - raw_t).abs() < 1e-8 * raw_t);
                let ps = product_sum_limit(GammaMode::Finite(g), a, b, 1.0).unwrap();
                assert!((4.0 * ps - t).abs() < 1e-8 * t);
            }
        }
    }

    #[test]
    fn finite_branch_edges() {
        let z = limit_constants(GammaMode::Zero, 0.5).unwrap();
        let f = limit_constants(GammaMode::Finite(1e-6), 0.5).unwrap();
        assert!((f.i - z.i).abs() < 1e-4);
        assert!((f.j - z.j).abs() < 1e-3);
        // gamma^{3/2} I_gamma -> I_inf
        let inf = limit_constants(GammaMode::Infinite, 0.5).unwrap();
        let g: f64 = 1e8;
        let big = limit_constants(GammaMode::Finite(g), 0.5).unwrap();
        assert!((big.i * g.powf(1.5) - inf.i).abs() < 1e-3 * inf.i);
        assert!(lemma_t_limit(GammaMode::Zero, 1.0, 1.0).is_err());
        assert!(
            (lemma_t_limit(GammaMode::Finite(1e-7), 1.5, 0.5).unwrap() - 8.0 / 3.0).abs() < 1e-5
        );
    }

    #[test]
    fn constants_are_even_in_rho() {
        for mode in [GammaMode::Zero, GammaMode::Finite(0.8), GammaMode::Infinite] {
            for rho in [0.1, 0.5, 0.95] {
                let p = limit_constants(mode, rho).unwrap();
                let m = limit_constants(mode, -rho).unwrap();
                assert!((p.i - m.i).abs() < 1e-14 * p.i);
                assert!((p.j - m.j).abs() <= 1e-14 * p.j);
                assert!(p.i > 0.0);
                assert_eq!(p.j > 0.0, mode != GammaMode::Infinite);
            }
        }
    }

    #[test]
    fn block_route_matches_dense() {
        for (n, v) in [
            (1usize, 0.0),
            (6, 0.0),
            (13, 0.05),
            (40, 1.0 / 40.0),
            (64, 0.25),
        ] {
            let spec = ModelSpec::new(n, -0.45, v, GammaMode::Zero).unwrap();
            let block = BlockDct::new(&spec);
            for (alpha, beta) in [(1.0, 0.0), (0.0, 1.0), (0.7, -1.3)] {
                let fast = block.frob_sq(alpha, beta);
                let dense = dense_frob_sq(&spec, alpha, beta).unwrap();
                assert!((fast - dense).abs() < 1e-10 * dense, "n={n} {alpha} {beta}");
            }
        }
    }

    #[test]
    fn block_identity_for_sbar() {
        let spec = finite(20, 0.6, 0.9);
        let st = build_structures(&spec);
        let half = |a: f64| {
            let g = st.g_of(a);
            let e = nalgebra::SymmetricEigen::new(g);

            &e.eigenvectors
                * DMatrix::from_diagonal(&e.eigenvalues.map(|x| 1.0 / x.sqrt()))
                * e.eigenvectors.transpose()
        };
        let hp = half(1.6);
        let hm = half(0.4);
        let p = (&hp * (&st.s + &st.r) * &hp).norm_squared();
        let m = (&hm * (&st.s - &st.r) * &hm).norm_squared();
        let dense = dense_frob_sq(&spec, 0.0, 1.0).unwrap();
        assert!((dense - 0.25 * (p + m)).abs() < 1e-10 * dense);
    }

    #[test]
    fn spectral_norm_matches_dense() {
        for n in [15usize, 90] {
            spectral_norm_case(finite(n, 0.5, 1.0));
        }
        spectral_norm_case(ModelSpec::noise_dominated(90, -0.7, 0.25).unwrap());
    }

    fn spectral_norm_case(spec: ModelSpec) {
        let st = build_structures(&spec);
        let e = nalgebra::SymmetricEigen::new(st.gbar.clone());
        let inv_sqrt = &e.eigenvectors
            * DMatrix::from_diagonal(&e.eigenvalues.map(|x| 1.0 / x.sqrt()))
            * e.eigenvectors.transpose();
        let block = BlockDct::new(&spec);
        for (alpha, beta) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (-0.4, 2.0)] {
            let m = &inv_sqrt * (&st.tbar * alpha + &st.sbar * beta) * &inv_sqrt;
            let ev = nalgebra::SymmetricEigen::new(m).eigenvalues;
            let want = ev.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let got = block.spectral_norm(alpha, beta);
            assert!(
                (got - want).abs() < 1e-6 * want,
                "{alpha} {beta}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn lemma_sums_match_dense_norms() {
        let n = 18;
        let spec = finite(n, 0.5, 0.6);
        let st = build_structures(&spec);
        let half = |a: f64| {
            let e = nalgebra::SymmetricEigen::new(st.g_of(a));
            &e.eigenvectors
                * DMatrix::from_diagonal(&e.eigenvalues.map(|x| 1.0 / x.sqrt()))
                * e.eigenvectors.transpose()
        };
        let (ha, hb) = (half(1.5), half(0.5));
        let s_dense = (&ha * &st.s * &ha).norm_squared();
        assert!((sym_operator_frob_sq(n, spec.v_n, 1.5) - s_dense).abs() < 1e-10 * s_dense);
        let t_dense = (&ha * &st.t * &hb).norm_squared();
        assert!((lag_operator_frob_sq(n, spec.v_n, 1.5, 0.5) - t_dense).abs() < 1e-10 * t_dense);
    }

    #[test]
    fn frobenius_zero_weights() {
        let r = frobenius_limit_check(&finite(32, 0.5, 1.0), 0.0, 0.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
    }

    #[test]
    fn lemma_diagnostics_rejects_bad_params() {
        let spec = finite(16, 0.5, 1.0);
        let bad = LemmaParams {
            a: -1.0,
            b: 0.5,
            c: 1.0,
        };
        assert!(lemma_diagnostics(&spec, bad).is_err());
        let recs = lemma_diagnostics(&spec, LemmaParams::default()).unwrap();
        assert!(recs.iter().any(|r| r.lemma_id == "lag_operator"));
        assert!(recs.iter().all(|r| r.value.is_finite()));
    }
}
