//! Design matrices, least squares, cluster-robust covariance and splines.

mod design;
mod ols;
mod spline;

pub use design::{build_design, Design, DesignSpec, Term};
pub use ols::{cluster_robust_vcov, ols_fit, ols_fit_named, ClusterVcov, OlsFit};
pub use spline::{default_knot_quantiles, quantile_sorted, spline_basis, RcsBasis};
