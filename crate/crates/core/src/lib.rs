//! Difference-in-differences estimation for staggered treatment adoption.
//!
//! The crate covers panel ingestion and validation ([`panel`]), least squares
//! with cluster-robust covariance and restricted cubic splines ([`regress`]),
//! group-time ATT estimators and their aggregation ([`did`]), the cluster
//! bootstrap and pre-trend Wald test ([`inference`]), and a synthetic panel
//! generator with known truth ([`simgen`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod did;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod panel;
pub mod pipeline;
pub mod regress;
pub mod report;
pub mod scalar;
pub mod simgen;

pub use error::{DidError, Result};
pub use scalar::Scalar;

pub type Panel = panel::PanelDataset<f64>;
pub type Record = panel::RecordInput<f64>;
pub type Att = did::GroupTimeAtt<f64>;
pub type Grid = did::GridResult<f64>;
pub type Fit = regress::OlsFit<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type Bootstrap = inference::BootstrapResult<f64>;
