use serde::{Deserialize, Serialize};

use crate::error::{LagError, Result};

/// Declared limit of `n * v_n`.
///
/// A single `(n, v_n)` pair cannot determine a limit, so the regime is always a
/// declaration made by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "gamma", rename_all = "snake_case")]
pub enum GammaMode {
    Zero,
    Finite(f64),
    Infinite,
}

impl GammaMode {
    /// `gamma` as an extended real (`f64::INFINITY` for the noise-dominated regime).
    pub fn value(self) -> f64 {
        match self {
            GammaMode::Zero => 0.0,
            GammaMode::Finite(g) => g,
            GammaMode::Infinite => f64::INFINITY,
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            GammaMode::Finite(g) if !(g > 0.0 && g.is_finite()) => Err(LagError::InvalidSpec(
                format!("finite regime needs 0 < gamma < inf, got {g}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Full parameterization of one stage of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Observations per series.
    pub n: usize,
    pub rho: f64,
    /// Noise variance at this stage.
    pub v_n: f64,
    /// Lag, in units of the observation horizon.
    pub theta: f64,
    pub gamma_mode: GammaMode,
    /// Localization rate for the `c * eta_n` parameterization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_n: Option<f64>,
    /// Bounded open interval of admissible `c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_interval: Option<(f64, f64)>,
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho.abs() < 1.0 && rho != 0.0 {
        Ok(())
    } else {
        Err(LagError::InvalidRho(rho))
    }
}

impl ModelSpec {
    pub fn new(n: usize, rho: f64, v_n: f64, gamma_mode: GammaMode) -> Result<Self> {
        let spec = Self {
            n,
            rho,
            v_n,
            theta: 0.0,
            gamma_mode,
            eta_n: None,
            c_interval: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `v_n = 0`, declared `gamma = 0`.
    pub fn noiseless(n: usize, rho: f64) -> Result<Self> {
        Self::new(n, rho, 0.0, GammaMode::Zero)
    }

    /// `v_n = gamma / n`, declared finite `gamma`.
    pub fn balanced(n: usize, rho: f64, gamma: f64) -> Result<Self> {
        Self::new(n, rho, gamma / n as f64, GammaMode::Finite(gamma))
    }

    /// Constant `v_n = v`, declared `gamma = inf`.
    pub fn noise_dominated(n: usize, rho: f64, v: f64) -> Result<Self> {
        Self::new(n, rho, v, GammaMode::Infinite)
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_localization(mut self, eta_n: f64, c_interval: (f64, f64)) -> Self {
        self.eta_n = Some(eta_n);
        self.c_interval = Some(c_interval);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(LagError::InvalidSpec("n must be positive".into()));
        }
        check_rho(self.rho)?;
        if !(self.v_n >= 0.0 && self.v_n.is_finite()) {
            return Err(LagError::InvalidSpec(format!(
                "noise variance must be finite and nonnegative, got {}",
                self.v_n
            )));
        }
        if !self.theta.is_finite() {
            return Err(LagError::InvalidSpec("theta must be finite".into()));
        }
        self.gamma_mode.validate()?;
        if let Some(eta) = self.eta_n {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(LagError::InvalidSpec(format!(
                    "eta_n must be positive, got {eta}"
                )));
            }
        }
        if let Some((lo, hi)) = self.c_interval {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(LagError::InvalidSpec(format!(
                    "c interval ({lo}, {hi}) must be bounded and nonempty"
                )));
            }
        }
        Ok(())
    }

    /// Largest `|theta|` with `v_n - n theta^2 + |theta| >= 0`.
    pub fn theta_bound(&self) -> f64 {
        let n = self.n as f64;
        (1.0 + (1.0 + 4.0 * n * self.v_n).sqrt()) / (2.0 * n)
    }

    /// Whether the surrogate model is defined at `theta`.
    pub fn in_theta_domain(&self, theta: f64) -> bool {
        theta.abs() <= self.theta_bound() * (1.0 + 4.0 * f64::EPSILON)
    }

    pub fn require_theta_domain(&self, theta: f64) -> Result<()> {
        if self.in_theta_domain(theta) {
            Ok(())
        } else {
            Err(LagError::LagOutOfDomain {
                theta,
                bound: self.theta_bound(),
            })
        }
    }

    /// Variance of the independent part of the surrogate noise at `theta`.
    pub fn surrogate_noise_variance(&self, theta: f64) -> f64 {
        (self.v_n - self.n as f64 * theta * theta + theta.abs()).max(0.0)
    }

    pub fn regime(&self) -> Result<Regime> {
        classify_regime(self)
    }
}

/// Effective sample size and convergence rate of a declared regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub gamma: f64,
    /// `N_n`.
    pub effective_n: f64,
    /// `r_n = N_n^{-3/2}`.
    pub rate: f64,
}

pub fn classify_regime(spec: &ModelSpec) -> Result<Regime> {
    spec.gamma_mode.validate()?;
    let n = spec.n as f64;
    let effective_n = match spec.gamma_mode {
        GammaMode::Infinite => {
            if spec.v_n <= 0.0 {
                return Err(LagError::InvalidSpec(
                    "infinite regime needs v_n > 0 (effective sample size undefined)".into(),
                ));
            }
            (n / spec.v_n).sqrt()
        }
        _ => n,
    };
    Ok(Regime {
        gamma: spec.gamma_mode.value(),
        effective_n,
        rate: effective_n.powf(-1.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_examples() {
        let r = classify_regime(&ModelSpec::noiseless(100, 0.5).unwrap()).unwrap();
        assert_eq!(r.effective_n, 100.0);
        assert!((r.rate - 1e-3).abs() < 1e-15);

        let r = classify_regime(&ModelSpec::noise_dominated(100, 0.5, 0.04).unwrap()).unwrap();
        assert!((r.effective_n - 50.0).abs() < 1e-12);
        assert!((r.rate - 2.8284271247461903e-3).abs() < 1e-12);

        let r = classify_regime(&ModelSpec::balanced(400, 0.5, 1.0).unwrap()).unwrap();
        assert_eq!(r.effective_n, 400.0);
        assert!((r.rate - 1.25e-4).abs() < 1e-16);
        assert_eq!(r.gamma, 1.0);
    }

    #[test]
    fn infinite_regime_without_noise_is_rejected() {
        let spec = ModelSpec::new(10, 0.5, 0.0, GammaMode::Infinite).unwrap();
        assert!(classify_regime(&spec).is_err());
    }

    #[test]
    fn rho_must_be_admissible() {
        for rho in [0.0, 1.0, -1.0, 1.5, f64::NAN] {
            assert!(ModelSpec::noiseless(4, rho).is_err());
        }
        assert!(ModelSpec::noiseless(4, -0.3).is_ok());
    }

    #[test]
    fn theta_domain_matches_definition() {
        let spec = ModelSpec::new(50, 0.5, 0.02, GammaMode::Finite(1.0)).unwrap();
        let b = spec.theta_bound();
        let n = spec.n as f64;
        assert!((spec.v_n - n * b * b + b).abs() < 1e-14);
        assert!(spec.in_theta_domain(b));
        assert!(spec.in_theta_domain(-b));
        assert!(!spec.in_theta_domain(b * 1.001));
        // v_n = 0 gives exactly 1/n.
        let spec = ModelSpec::noiseless(64, 0.5).unwrap();
        assert!((spec.theta_bound() - 1.0 / 64.0).abs() < 1e-18);
    }
}
