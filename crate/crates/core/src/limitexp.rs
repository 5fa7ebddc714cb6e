//! The limit experiment `N(u I, I) (x) N(|u| J, J)`: its likelihood ratio
//! `Z(u) = exp(u z1 + |u| z2 - u^2 (I + J) / 2)`, the argmax `u_hat`, the
//! posterior mean `u_tilde` and their second moments.

use std::f64::consts::{FRAC_1_PI, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{LagError, Result};
use crate::rng::{standard_normals, stream_rng};
use crate::spectral::limit_constants;
use crate::structure::GammaMode;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Mills ratio `(1 - Phi(t)) / phi(t)` for `t >= 8` by its continued fraction.
fn mills_cf(t: f64) -> f64 {
    let mut acc = t;
    for k in (1..=120).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// `Psi(x) = int_0^inf exp(u x - u^2 / 2) du = sqrt(2 pi) exp(x^2 / 2) Phi(x)`.
pub fn psi(x: f64) -> f64 {
    if x < -8.0 {
        mills_cf(-x)
    } else if x <= 30.0 {
        (2.0 * PI).sqrt() * (0.5 * x * x).exp() * 0.5 * erfc(-x / std::f64::consts::SQRT_2)
    } else {
        log_psi(x).exp()
    }
}

pub fn log_psi(x: f64) -> f64 {
    if x <= 0.0 {
        psi(x).ln()
    } else {
        // ln Phi(x) = ln(1 - erfc(x / sqrt 2) / 2)
        LN_SQRT_2PI + 0.5 * x * x + (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    }
}

/// One realization of the limit experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitDraw {
    pub zeta1: f64,
    pub zeta2: f64,
    pub u_hat: f64,
    pub u_tilde: f64,
}

/// `log Z(u)`.
pub fn log_likelihood_ratio(u: f64, zeta1: f64, zeta2: f64, i: f64, j: f64) -> f64 {
    u * zeta1 + u.abs() * zeta2 - 0.5 * u * u * (i + j)
}

/// Maximizer of `Z`.
pub fn u_hat(zeta1: f64, zeta2: f64, i: f64, j: f64) -> f64 {
    let k = i + j;
    if zeta1 > (-zeta2).max(0.0) {
        (zeta1 + zeta2) / k
    } else if zeta1 < zeta2.min(0.0) {
        (zeta1 - zeta2) / k
    } else {
        0.0
    }
}

/// Posterior mean of `u` under `Z` with a flat prior.
pub fn u_tilde(zeta1: f64, zeta2: f64, i: f64, j: f64) -> f64 {
    if j == 0.0 {
        return zeta1 / i;
    }
    let sk = (i + j).sqrt();
    let x = (zeta1 + zeta2) / sk;
    let y = (zeta2 - zeta1) / sk;
    tilde_kernel(x, y) / sk
}

/// `(x Psi(x) - y Psi(y)) / (Psi(x) + Psi(y))`, evaluated through `log Psi`.
fn tilde_kernel(x: f64, y: f64) -> f64 {
    let w = 1.0 / (1.0 + (log_psi(y) - log_psi(x)).exp());
    w * x - (1.0 - w) * y
}

pub fn limit_draw(zeta1: f64, zeta2: f64, i: f64, j: f64) -> LimitDraw {
    LimitDraw {
        zeta1,
        zeta2,
        u_hat: u_hat(zeta1, zeta2, i, j),
        u_tilde: u_tilde(zeta1, zeta2, i, j),
    }
}

/// How the Gaussian pair behind a draw is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPath {
    /// `z1 ~ N(0, I)` and `z2 ~ N(0, J)` independently.
    #[default]
    Zeta,
    /// `(x, y)` standard bivariate normal with correlation `R = (J - I) / (J + I)`,
    /// mapped back to `(z1, z2)`.
    Decorrelated,
}

const DRAWS_PER_STREAM: usize = 4096;

/// `m` draws at `(rho, gamma)`; draw `r` comes from stream `r / 4096` of `seed`.
pub fn sample_limit(
    rho: f64,
    gamma: GammaMode,
    seed: u64,
    m: usize,
    path: SamplingPath,
) -> Result<Vec<LimitDraw>> {
    let c = limit_constants(gamma, rho)?;
    let (i, j) = (c.i, c.j);
    let k = i + j;
    let r = (j - i) / k;
    let blocks = m.div_ceil(DRAWS_PER_STREAM);
    let out: Vec<Vec<LimitDraw>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = DRAWS_PER_STREAM.min(m - b * DRAWS_PER_STREAM);
            let mut rng = stream_rng(seed, b as u64);
            let g = standard_normals(&mut rng, 2 * len);
            g.chunks_exact(2)
                .map(|p| {
                    let (z1, z2) = match path {
                        SamplingPath::Zeta => (i.sqrt() * p[0], j.sqrt() * p[1]),
                        SamplingPath::Decorrelated => {
                            let x = p[0];
                            let y = r * p[0] + (1.0 - r * r).max(0.0).sqrt() * p[1];
                            let sk = k.sqrt();
                            (0.5 * sk * (x - y), 0.5 * sk * (x + y))
                        }
                    };
                    limit_draw(z1, z2, i, j)
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

fn check_info(i: f64, j: f64) -> Result<()> {
    if !(i > 0.0 && i.is_finite()) || !(j >= 0.0 && j.is_finite()) {
        return Err(LagError::Domain(format!(
            "limit variances need I > 0 and J >= 0, got I = {i}, J = {j}"
        )));
    }
    Ok(())
}

/// `E[u_hat^2]` in closed form.
pub fn mle_limit_variance(i: f64, j: f64) -> Result<f64> {
    check_info(i, j)?;
    let k = i + j;
    Ok((1.0 - FRAC_1_PI * (j / i).sqrt().atan() + (i * j).sqrt() / (PI * k)) / k)
}

/// `P(u_hat = 0) = arctan(sqrt(J / I)) / pi`.
pub fn mle_zero_probability(i: f64, j: f64) -> Result<f64> {
    check_info(i, j)?;
    Ok(FRAC_1_PI * (j / i).sqrt().atan())
}

/// Nodes and weights of the `m`-point Gauss-Hermite rule for the standard
/// normal measure (weights sum to one), by Golub-Welsch.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let jac = DMatrix::from_fn(m, m, |a, b| {
        if a.abs_diff(b) == 1 {
            (a.max(b) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|c| (eig.eigenvalues[c], eig.eigenvectors[(0, c)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Result of the adaptive Gauss-Hermite evaluation of `E[u_tilde^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureValue {
    pub value: f64,
    pub nodes: usize,
    pub rel_change: f64,
}

/// `E[u_tilde^2]` by tensor Gauss-Hermite in decorrelated coordinates, doubling
/// the node count until the relative change drops below `tol`.
pub fn bayes_limit_variance_detail(i: f64, j: f64, tol: f64) -> Result<QuadratureValue> {
    check_info(i, j)?;
    if j == 0.0 {
        return Ok(QuadratureValue {
            value: 1.0 / i,
            nodes: 0,
            rel_change: 0.0,
        });
    }
    let k = i + j;
    let r = (j - i) / k;
    let s = (1.0 - r * r).sqrt();
    let eval = |m: usize| -> f64 {
        let (x, w) = gauss_hermite(m);
        let mut total = 0.0;
        for (a, wa) in x.iter().zip(&w) {
            for (b, wb) in x.iter().zip(&w) {
                let y = r * a + s * b;
                total += wa * wb * tilde_kernel(*a, y).powi(2);
            }
        }
        total / k
    };
    let mut m = 16;
    let mut prev = eval(m);
    loop {
        m *= 2;
        let cur = eval(m);
        let change = ((cur - prev) / cur).abs();
        if change < tol {
            return Ok(QuadratureValue {
                value: cur,
                nodes: m,
                rel_change: change,
            });
        }
        if m >= 512 {
            return Err(LagError::QuadratureFailed {
                last: cur,
                previous: prev,
            });
        }
        prev = cur;
    }
}

/// `E[u_tilde^2]` to relative accuracy `1e-6`.
pub fn bayes_limit_variance(i: f64, j: f64) -> Result<f64> {
    bayes_limit_variance_detail(i, j, 1e-6).map(|q| q.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + h * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn psi_at_zero() {
        assert!((psi(0.0) - (PI / 2.0).sqrt()).abs() < 1e-14);
        assert!((psi(0.0) - 1.2533141373).abs() < 1e-10);
    }

    #[test]
    fn psi_matches_defining_integral() {
        for x in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let q = simpson(|u| (u * x - 0.5 * u * u).exp(), 0.0, 20.0, 200_000);
            assert!((psi(x) - q).abs() < 1e-9 * q.max(1.0), "x={x}");
        }
    }

    #[test]
    fn psi_branches_are_continuous() {
        for x in [-8.0f64, 30.0] {
            let lo = psi(x - 1e-9);
            let hi = psi(x + 1e-9);
            assert!((lo - hi).abs() < 1e-7 * hi, "x={x}");
        }
        // continued fraction against the direct form where both are accurate
        for t in [8.5f64, 10.0, 14.0] {
            let direct = (2.0 * PI).sqrt() * (0.5 * t * t).exp() * 0.5 * erfc(t / 2f64.sqrt());
            assert!((mills_cf(t) - direct).abs() < 1e-10 * direct);
        }
        assert!((log_psi(0.7) - psi(0.7).ln()).abs() < 1e-14);
    }

    #[test]
    fn psi_tail_and_monotone() {
        // x Psi(x) + 1 = x^-2 - 3 x^-4 + 15 x^-6 - ...
        for x in [-30.0f64, -40.0, -100.0] {
            let gap = x * psi(x) + 1.0;
            let series = x.powi(-2) - 3.0 * x.powi(-4) + 15.0 * x.powi(-6) - 105.0 * x.powi(-8);
            assert!((gap - series).abs() < 1e-11, "x={x}: {gap} vs {series}");
        }
        assert!((-40.0 * psi(-40.0) + 1.0).abs() < 1e-3);
        let mut prev = 0.0;
        for k in -400..=400 {
            let v = psi(k as f64 * 0.05);
            assert!(v > prev);
            prev = v;
        }
        assert!(log_psi(50.0).is_finite());
        assert!((log_psi(50.0) - (LN_SQRT_2PI + 1250.0)).abs() < 1e-12);
    }

    #[test]
    fn mle_variance_cases() {
        assert!((mle_limit_variance(2.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        let i = 0.7;
        let want = (0.75 + 1.0 / (2.0 * PI)) / (2.0 * i);
        assert!((mle_limit_variance(i, i).unwrap() - want).abs() < 1e-15);
        assert!(mle_limit_variance(0.0, 1.0).is_err());
    }

    #[test]
    fn u_hat_is_argmax() {
        let mut rng = stream_rng(11, 0);
        let g = standard_normals(&mut rng, 2000);
        let (i, j): (f64, f64) = (0.3, 0.9);
        for p in g.chunks_exact(2) {
            let (z1, z2) = (p[0] * i.sqrt(), p[1] * j.sqrt());
            let u = u_hat(z1, z2, i, j);
            let at = log_likelihood_ratio(u, z1, z2, i, j);
            for d in [1e-4, 1e-2, 1.0] {
                assert!(at >= log_likelihood_ratio(u + d, z1, z2, i, j));
                assert!(at >= log_likelihood_ratio(u - d, z1, z2, i, j));
            }
        }
    }

    #[test]
    fn u_tilde_matches_brute_force_integral() {
        let mut rng = stream_rng(5, 1);
        let g = standard_normals(&mut rng, 200);
        let c = limit_constants(GammaMode::Zero, 0.5).unwrap();
        let (i, j) = (c.i, c.j);
        let nodes = 100_000;
        let h = 80.0 / nodes as f64;
        for p in g.chunks_exact(2) {
            let (z1, z2) = (p[0] * i.sqrt(), p[1] * j.sqrt());
            let lz: Vec<f64> = (0..=nodes)
                .map(|k| log_likelihood_ratio(-40.0 + h * k as f64, z1, z2, i, j))
                .collect();
            let mx = lz.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for (k, l) in lz.iter().enumerate() {
                let w = if k == 0 || k == nodes { 0.5 } else { 1.0 };
                let e = (l - mx).exp() * w;
                num += (-40.0 + h * k as f64) * e;
                den += e;
            }
            let brute = num / den;
            assert!((u_tilde(z1, z2, i, j) - brute).abs() < 1e-6, "{z1} {z2}");
        }
    }

    #[test]
    fn degenerate_information_collapses() {
        let c = limit_constants(GammaMode::Infinite, 0.5).unwrap();
        let draws = sample_limit(0.5, GammaMode::Infinite, 3, 500, SamplingPath::Zeta).unwrap();
        for d in draws {
            assert_eq!(d.zeta2, 0.0);
            assert_eq!(d.u_hat, d.zeta1 / c.i);
            assert_eq!(d.u_tilde, d.zeta1 / c.i);
        }
        assert_eq!(bayes_limit_variance(c.i, 0.0).unwrap(), 1.0 / c.i);
        assert_eq!(mle_limit_variance(c.i, 0.0).unwrap(), 1.0 / c.i);
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let mom = |p: i32| x.iter().zip(&w).map(|(a, b)| b * a.powi(p)).sum::<f64>();
        assert!((mom(0) - 1.0).abs() < 1e-13);
        assert!(mom(1).abs() < 1e-13);
        assert!((mom(2) - 1.0).abs() < 1e-12);
        assert!((mom(4) - 3.0).abs() < 1e-11);
        assert!((mom(8) - 105.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_limit(0.5, GammaMode::Zero, 9, 5000, SamplingPath::Zeta).unwrap();
        let b = sample_limit(0.5, GammaMode::Zero, 9, 5000, SamplingPath::Zeta).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5000);
    }

    #[test]
    fn zero_probability_matches_sampling() {
        let c = limit_constants(GammaMode::Zero, 0.5).unwrap();
        let m = 100_000;
        let draws = sample_limit(0.5, GammaMode::Zero, 21, m, SamplingPath::Zeta).unwrap();
        let p_hat = draws.iter().filter(|d| d.u_hat == 0.0).count() as f64 / m as f64;
        let p = mle_zero_probability(c.i, c.j).unwrap();
        let se = (p * (1.0 - p) / m as f64).sqrt();
        assert!((p_hat - p).abs() < 3.0 * se, "{p_hat} vs {p}");
    }

    #[test]
    fn variances_continuous() {
        for (i, j) in [(0.2, 0.5), (1.0, 1.0), (0.5, 3.0)] {
            let d = 1e-6;
            let a = bayes_limit_variance(i, j).unwrap();
            let b = bayes_limit_variance(i + d, j - d).unwrap();
            assert!((a - b).abs() < 1e-3);
            let a = mle_limit_variance(i, j).unwrap();
            let b = mle_limit_variance(i + d, j - d).unwrap();
            assert!((a - b).abs() < 1e-3);
        }
    }
}
