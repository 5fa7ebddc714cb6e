//! Model parameterization, deterministic structure matrices and the exact and
//! surrogate covariance families.

mod covariance;
mod matrices;
mod regime;

pub use covariance::{
    banded_differenced, banded_gbar, brownian_kernel, check_psd, deinterleave, difference_blocks,
    differenced_covariance, exact_covariance, interleave, nominal_differenced_covariance,
    surrogate_covariance, CovKind, CovarianceModel, PSD_REL_TOL,
};
pub use matrices::{build_structures, StructureSet};
pub(crate) use regime::check_rho;
pub use regime::{classify_regime, GammaMode, ModelSpec, Regime};
