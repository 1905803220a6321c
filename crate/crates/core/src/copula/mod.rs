//! Truncated latent Gaussian copula: rank-based estimation and sampling.

mod bridge;
mod kendall;
mod model;
mod mvn;
mod nearest;

pub use bridge::{bridge_tt, bridge_tt_qmc, invert_bridge, sigma4a, sigma4b, Inversion, SIGMA_BOUND};
pub use kendall::{kendall_tau, kendall_tau_matrix, KendallMatrix};
pub(crate) use model::sample_gaussian_copula;
pub use model::{fit_tlnpn, fit_tlnpn_with, sample_tlnpn, zero_truncation_levels, LatentCopulaModel};
pub use mvn::{mvn_cdf, phi4, MvnEstimate, QmcOptions, QMC_SEED};
pub use nearest::{nearest_correlation, EIGEN_FLOOR};
