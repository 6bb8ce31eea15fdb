//! ATT estimators for staggered adoption: 2×2 comparisons, regression and
//! outcome-regression forms, the group-time grid, aggregation, and TWFE.

mod aggregate;
mod cells;
mod grid;
mod twfe;
mod twobytwo;

pub use aggregate::{
    aggregate, aggregate_event, aggregate_overall, group_weights, AggregationResult, EventCurve, EventPoint,
};
pub use grid::{att_gt_all, grid_pairs, pretrend_atts, GridResult, SkippedPair};
pub use twfe::{twfe_estimate, ClusterLevel, TwfeResult, TWFE_CAVEAT};
pub use twobytwo::{att_2x2_means, att_2x2_regression, att_or_adjusted, stratified_att, StratifiedAtt};

pub(crate) use cells::CellTable;

use serde::{Deserialize, Serialize};

use crate::error::{DidError, Result};
use crate::panel::{ControlCohort, ControlRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[default]
    Means,
    Regression,
    OutcomeRegression,
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "means" => Ok(EstimatorKind::Means),
            "regression" => Ok(EstimatorKind::Regression),
            "outcome-regression" | "or" => Ok(EstimatorKind::OutcomeRegression),
            other => Err(format!(
                "unknown estimator `{other}` (expected means, regression or outcome-regression)"
            )),
        }
    }
}

/// How covariates enter the 2×2 regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateMode {
    None,
    Additive,
    #[default]
    InteractedWithTime,
}

/// Identifying assumptions an estimate relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assumption {
    Consistency,
    ParallelTrends,
    ConditionalParallelTrends,
    CommonSupport,
    /// ATT constant across covariate values.
    CovariateHomogeneity,
    /// ATT constant across groups and periods.
    GroupTimeHomogeneity,
}

/// Covariate entering an adjusted estimator, optionally as a restricted
/// cubic spline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateTerm {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spline_knots: Option<usize>,
}

impl CovariateTerm {
    pub fn plain(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            spline_knots: None,
        }
    }

    pub fn spline(name: impl Into<String>, knots: usize) -> Self {
        Self {
            name: name.into(),
            spline_knots: Some(knots),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub estimator: EstimatorKind,
    pub covariates: Vec<CovariateTerm>,
    pub covariate_mode: CovariateMode,
    pub control_rule: ControlRule,
    /// Periods of anticipated effect before the first treated period.
    pub anticipation: i64,
    /// Cells smaller than this make a pair inestimable.
    pub min_cell: usize,
    /// Restrict every comparison to units observed in both of its periods.
    pub require_balanced: bool,
    /// Level for analytic (cluster-robust) intervals.
    pub alpha: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorKind::Means,
            covariates: Vec::new(),
            covariate_mode: CovariateMode::InteractedWithTime,
            control_rule: ControlRule::NotYetTreated,
            anticipation: 0,
            min_cell: 1,
            require_balanced: false,
            alpha: 0.05,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anticipation < 0 {
            return Err(DidError::InvalidConfig("anticipation must be >= 0".into()));
        }
        if self.min_cell < 1 {
            return Err(DidError::InvalidConfig("min_cell must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DidError::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Cells below this size produce a warning.
pub const SMALL_CELL_WARNING: usize = 30;

/// One comparison: cohort `g` at period `t` against period `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSpec {
    pub g: i64,
    pub t: i64,
    pub base: i64,
    pub control: ControlRule,
    pub anticipation: i64,
}

impl PairSpec {
    pub fn new(g: i64, t: i64, base: i64, control: ControlRule) -> Self {
        Self {
            g,
            t,
            base,
            control,
            anticipation: 0,
        }
    }

    pub fn cohort(&self) -> ControlCohort {
        ControlCohort {
            rule: self.control,
            g: self.g,
            t: self.t,
            base: self.base,
            anticipation: self.anticipation,
        }
    }
}

/// Estimate of ATT(g, t), `w = t - g`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTimeAtt<T> {
    pub g: i64,
    pub t: i64,
    pub w: i64,
    pub estimate: T,
    pub se: Option<T>,
    pub ci: Option<(T, T)>,
    /// Treated-cohort records at period `t`.
    pub n_treated: usize,
    /// Comparison-cohort records at period `t`.
    pub n_control: usize,
    pub control_rule: ControlRule,
    pub base_period: i64,
    pub estimator: EstimatorKind,
    pub assumptions: Vec<Assumption>,
    pub warnings: Vec<String>,
}
