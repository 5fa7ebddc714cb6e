//! Likelihood analysis of a bivariate Brownian lead-lag model observed with
//! Gaussian measurement error.
//!
//! The crate builds the exact and surrogate covariance models, the spectral
//! limit constants, the LAN statistics, the quasi-likelihood estimators of the
//! lag and the limit experiment that describes their asymptotic laws.

pub mod banded;
pub mod campaign;
pub mod error;
pub mod inference;
pub mod limitexp;
pub mod rng;
pub mod simulate;
pub mod spectral;
pub mod structure;

pub use error::{LagError, Result};
pub use structure::{
    build_structures, classify_regime, CovKind, CovarianceModel, GammaMode, ModelSpec, Regime,
    StructureSet,
};
