use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::matrices::build_structures;
use super::regime::ModelSpec;
use crate::banded::BandedSym;
use crate::error::{LagError, Result};

/// Relative eigenvalue floor accepted as rounding noise in PSD checks.
pub const PSD_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    /// Covariance of `Z_n` under the lagged observation model.
    ExactC,
    /// Covariance of `Z_n` under the endogenous-noise surrogate.
    SurrogateCtilde,
    /// Covariance of the differenced vector `(nabla (+) nabla) Z_n` under the surrogate.
    DifferencedV,
}

impl std::fmt::Display for CovKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CovKind::ExactC => "exact",
            CovKind::SurrogateCtilde => "surrogate",
            CovKind::DifferencedV => "differenced",
        };
        f.write_str(s)
    }
}

/// A dense `2n x 2n` covariance matrix tagged with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub kind: CovKind,
    pub theta: f64,
    pub matrix: DMatrix<f64>,
}

impl CovarianceModel {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Centered Gaussian log-density of `x` under this covariance.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(LagError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let chol = self
            .matrix
            .clone()
            .cholesky()
            .ok_or(LagError::NotPositiveDefinite {
                theta: self.theta,
                index: 0,
                pivot: f64::NAN,
            })?;
        let logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let y = chol
            .l()
            .solve_lower_triangular(&nalgebra::DVector::from_column_slice(x));
        let quad = y.map(|y| y.norm_squared()).unwrap_or(f64::NAN);
        let d = self.dim() as f64;
        Ok(-0.5 * (quad + logdet + d * (2.0 * std::f64::consts::PI).ln()))
    }
}

/// Covariance kernel of a two-sided Brownian motion with `B_0 = 0`.
#[inline]
pub fn brownian_kernel(s: f64, t: f64) -> f64 {
    if s >= 0.0 && t >= 0.0 {
        s.min(t)
    } else if s <= 0.0 && t <= 0.0 {
        s.abs().min(t.abs())
    } else {
        0.0
    }
}

/// Sampling clock of observation `k` (1-based) of series `series` (0 = X, 1 = Y).
#[inline]
fn obs_time(n: f64, theta: f64, series: usize, k: usize) -> f64 {
    let base = k as f64 / n;
    if series == 0 {
        base + theta.min(0.0)
    } else {
        base - theta.max(0.0)
    }
}

fn exact_entry(spec: &ModelSpec, theta: f64, p: usize, q: usize) -> f64 {
    let n = spec.n;
    let nf = n as f64;
    let (a, i) = (p / n, p % n + 1);
    let (b, j) = (q / n, q % n + 1);
    let k = brownian_kernel(obs_time(nf, theta, a, i), obs_time(nf, theta, b, j));
    if a == b {
        k + if i == j { spec.v_n } else { 0.0 }
    } else {
        spec.rho * k
    }
}

fn surrogate_entry(spec: &ModelSpec, theta: f64, p: usize, q: usize) -> f64 {
    let n = spec.n;
    let nf = n as f64;
    let (a, i) = (p / n, p % n + 1);
    let (b, j) = (q / n, q % n + 1);
    let m = i.min(j) as f64 / nf;
    let noise = if a == b && i == j { spec.v_n } else { 0.0 };
    let lag = theta.abs();
    // the lagged series is Y for theta >= 0 and X otherwise
    let lagged = if theta >= 0.0 { 1 } else { 0 };
    if a == b {
        m - if a == lagged { lag } else { 0.0 } + noise
    } else {
        // (i, j) re-ordered so that `x` indexes the leading series
        let (lead_idx, lag_idx) = if a == lagged { (j, i) } else { (i, j) };
        spec.rho * (m - if lead_idx >= lag_idx { lag } else { 0.0 })
    }
}

/// Checks positive semidefiniteness with the relative eigenvalue floor.
pub fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    if m.clone().cholesky().is_some() {
        return Ok(());
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min >= -PSD_REL_TOL * max {
        Ok(())
    } else {
        Err(LagError::Indefinite {
            min_eigenvalue: min,
        })
    }
}

/// Covariance `C_n(theta)` of the lagged observation model at `spec.theta`.
pub fn exact_covariance(spec: &ModelSpec) -> Result<CovarianceModel> {
    spec.validate()?;
    let d = 2 * spec.n;
    let theta = spec.theta;
    let matrix = DMatrix::from_fn(d, d, |p, q| exact_entry(spec, theta, p, q));
    check_psd(&matrix).map_err(|e| match e {
        LagError::Indefinite { min_eigenvalue } => LagError::Domain(format!(
            "exact covariance at theta = {theta} is indefinite (eigenvalue {min_eigenvalue:e})"
        )),
        other => other,
    })?;
    Ok(CovarianceModel {
        kind: CovKind::ExactC,
        theta,
        matrix,
    })
}

/// Covariance `C~_n(theta)` of the surrogate model at `spec.theta`.
pub fn surrogate_covariance(spec: &ModelSpec) -> Result<CovarianceModel> {
    spec.validate()?;
    spec.require_theta_domain(spec.theta)?;
    let d = 2 * spec.n;
    let theta = spec.theta;
    let matrix = DMatrix::from_fn(d, d, |p, q| surrogate_entry(spec, theta, p, q));
    Ok(CovarianceModel {
        kind: CovKind::SurrogateCtilde,
        theta,
        matrix,
    })
}

/// Covariance `V_n(theta)` of the differenced surrogate vector, dense.
///
/// This is `(nabla (+) nabla) C~ (nabla (+) nabla)^T` exactly. It equals
/// `Gbar - rho (theta Tbar + |theta| Sbar)` except in the first diagonal entry of
/// the lagged block, where the lag enters with weight 1 instead of `rho`; see
/// [`nominal_differenced_covariance`].
pub fn differenced_covariance(spec: &ModelSpec) -> Result<CovarianceModel> {
    spec.validate()?;
    spec.require_theta_domain(spec.theta)?;
    let n = spec.n;
    let theta = spec.theta;
    let matrix = DMatrix::from_fn(2 * n, 2 * n, |p, q| {
        let (a, i) = (p / n, p % n);
        let (b, j) = (q / n, q % n);
        differenced_surrogate_entry(spec, theta, a, i, b, j)
    });
    Ok(CovarianceModel {
        kind: CovKind::DifferencedV,
        theta,
        matrix,
    })
}

/// `Gbar - rho (theta Tbar + |theta| Sbar)`, assembled from the structure matrices.
pub fn nominal_differenced_covariance(spec: &ModelSpec) -> Result<CovarianceModel> {
    spec.validate()?;
    let s = build_structures(spec);
    let theta = spec.theta;
    let matrix = &s.gbar - (&s.tbar * theta + &s.sbar * theta.abs()) * spec.rho;
    Ok(CovarianceModel {
        kind: CovKind::DifferencedV,
        theta,
        matrix,
    })
}

#[inline]
fn gbar_entry(spec: &ModelSpec, a: usize, i: usize, b: usize, j: usize) -> f64 {
    let nf = spec.n as f64;
    if a == b {
        if i == j {
            1.0 / nf + spec.v_n * if i == 0 { 1.0 } else { 2.0 }
        } else if i.abs_diff(j) == 1 {
            -spec.v_n
        } else {
            0.0
        }
    } else if i == j {
        spec.rho / nf
    } else {
        0.0
    }
}

/// Entry of `nabla^T` (0-based).
#[inline]
fn nabla_t(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else if j == i + 1 {
        -1.0
    } else {
        0.0
    }
}

/// Entry `((a, i), (b, j))` of the differenced surrogate covariance (0-based, block coordinates).
fn differenced_surrogate_entry(
    spec: &ModelSpec,
    theta: f64,
    a: usize,
    i: usize,
    b: usize,
    j: usize,
) -> f64 {
    let g = gbar_entry(spec, a, i, b, j);
    if theta == 0.0 {
        return g;
    }
    let lag = theta.abs();
    let lagged = if theta > 0.0 { 1 } else { 0 };
    let corr = if a == b {
        if a == lagged && i == 0 && j == 0 {
            lag
        } else {
            0.0
        }
    } else {
        // Cov(d lead_k, d lagged_l) = rho (delta_kl / n - lag * nabla^T_kl)
        let (k, l) = if a == lagged { (j, i) } else { (i, j) };
        spec.rho * lag * nabla_t(k, l)
    };
    g - corr
}

/// Reorders `(X_1..X_n, Y_1..Y_n)` into `(X_1, Y_1, X_2, Y_2, ...)`.
pub fn interleave(block: &[f64]) -> Vec<f64> {
    let n = block.len() / 2;
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        out.push(block[i]);
        out.push(block[n + i]);
    }
    out
}

/// Inverse of [`interleave`].
pub fn deinterleave(inter: &[f64]) -> Vec<f64> {
    let n = inter.len() / 2;
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = inter[2 * i];
        out[n + i] = inter[2 * i + 1];
    }
    out
}

/// `(nabla (+) nabla) Z` for a block-ordered vector.
pub fn difference_blocks(z: &[f64]) -> Vec<f64> {
    let n = z.len() / 2;
    let mut out = Vec::with_capacity(2 * n);
    for block in [&z[..n], &z[n..]] {
        let mut prev = 0.0;
        for &v in block {
            out.push(v - prev);
            prev = v;
        }
    }
    out
}

/// `Gbar` in interleaved ordering.
pub fn banded_gbar(spec: &ModelSpec) -> BandedSym {
    BandedSym::from_fn(2 * spec.n, 2, |p, q| {
        gbar_entry(spec, p % 2, p / 2, q % 2, q / 2)
    })
}

/// Oriented sampling interval of the `k`-th (0-based) increment of a series.
#[inline]
fn increment_interval(n: f64, theta: f64, series: usize, k: usize) -> (f64, f64) {
    let end = obs_time(n, theta, series, k + 1);
    let start = if k == 0 {
        0.0
    } else {
        obs_time(n, theta, series, k)
    };
    (start, end)
}

#[inline]
fn signed_overlap((s1, e1): (f64, f64), (s2, e2): (f64, f64)) -> f64 {
    let (lo1, hi1) = (s1.min(e1), s1.max(e1));
    let (lo2, hi2) = (s2.min(e2), s2.max(e2));
    let len = (hi1.min(hi2) - lo1.max(lo2)).max(0.0);
    if len == 0.0 {
        return 0.0;
    }
    let sign = (e1 - s1).signum() * (e2 - s2).signum();
    sign * len
}

fn differenced_exact_entry(
    spec: &ModelSpec,
    theta: f64,
    a: usize,
    i: usize,
    b: usize,
    j: usize,
) -> f64 {
    let nf = spec.n as f64;
    let latent = signed_overlap(
        increment_interval(nf, theta, a, i),
        increment_interval(nf, theta, b, j),
    );
    if a != b {
        return spec.rho * latent;
    }
    let noise = if i == j {
        if i == 0 {
            spec.v_n
        } else {
            2.0 * spec.v_n
        }
    } else if i.abs_diff(j) == 1 {
        -spec.v_n
    } else {
        0.0
    };
    latent + noise
}

/// Differenced covariance of `kind` at `theta`, in interleaved ordering.
///
/// `ExactC` gives `(nabla (+) nabla) C_n(theta) (nabla (+) nabla)^T`; the two
/// surrogate kinds both give `V_n(theta)`. The unit-determinant change of
/// variables makes Gaussian log-densities of `Z` and of the differenced vector agree.
pub fn banded_differenced(spec: &ModelSpec, theta: f64, kind: CovKind) -> Result<BandedSym> {
    let n = spec.n;
    let dim = 2 * n;
    match kind {
        CovKind::ExactC => {
            let reach = (n as f64 * theta.abs()).ceil() as usize + 2;
            let bw = (2 * reach + 1).min(dim - 1);
            Ok(BandedSym::from_fn(dim, bw, |p, q| {
                differenced_exact_entry(spec, theta, p % 2, p / 2, q % 2, q / 2)
            }))
        }
        CovKind::SurrogateCtilde | CovKind::DifferencedV => {
            spec.require_theta_domain(theta)?;
            Ok(BandedSym::from_fn(dim, 3, |p, q| {
                differenced_surrogate_entry(spec, theta, p % 2, p / 2, q % 2, q / 2)
            }))
        }
    }
}
