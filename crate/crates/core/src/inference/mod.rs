//! Cluster bootstrap, percentile intervals and the joint pre-trend Wald test.

mod bootstrap;
mod wald;

pub use bootstrap::{cluster_bootstrap, replicate_draws, BootstrapPlan, BootstrapResult, MAX_FAILED_FRACTION};
pub use wald::{pretrend_wald_test, WaldTest, WALD_EIGEN_TOL};

use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
