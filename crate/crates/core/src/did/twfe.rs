use serde::{Deserialize, Serialize};

use crate::did::Assumption;
use crate::error::{DidError, Result};
use crate::inference::normal_quantile;
use crate::panel::PanelDataset;
use crate::regress::{build_design, DesignSpec, Term};
use crate::scalar::Scalar;

/// Clustering level for the TWFE sandwich. Only units are supported; no
/// coarser geography exists in the data model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterLevel {
    #[default]
    Unit,
}

pub const TWFE_CAVEAT: &str =
    "TWFE coefficient equals the ATT only if effects are constant across cohorts and periods";

#[derive(Debug, Clone, PartialEq)]
pub struct TwfeResult<T> {
    pub coefficient: T,
    pub se: Option<T>,
    pub ci: Option<(T, T)>,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// Assumption the coefficient relies on to be interpreted as an ATT.
    pub assumption: Assumption,
    pub caveat: &'static str,
    /// Fixed-effect columns dropped for collinearity.
    pub dropped: Vec<String>,
}

/// OLS of the outcome on `I{t >= g}` with full cohort and period fixed
/// effects (first level of each as reference) and a unit-clustered interval.
pub fn twfe_estimate<T: Scalar>(data: &PanelDataset<T>, cluster_level: ClusterLevel, alpha: f64) -> Result<TwfeResult<T>> {
    let ClusterLevel::Unit = cluster_level;
    let labels = data.group_labels();
    let periods = data.periods();
    let mut terms = vec![Term::Intercept];
    terms.extend(labels.iter().skip(1).map(|&l| Term::GroupIndicator(l)));
    terms.extend(periods.iter().skip(1).map(|&t| Term::TimeIndicator(t)));
    // Last, so collinearity resolution drops it rather than a fixed effect.
    terms.push(Term::TreatedPostIndicator);
    let design = build_design(data, &DesignSpec::new(terms))?;
    let column = design.column_names.len() - 1;
    let fit = design.fit()?;
    let coefficient = fit.coefficients[column]
        .ok_or_else(|| DidError::Unidentified(format!("{} (no variation beyond the fixed effects)", fit.column_names[column])))?;
    let dropped: Vec<String> = fit.dropped_names().into_iter().map(String::from).collect();
    let fit = fit.with_cluster_vcov(&design.cluster_ids)?;
    let n_clusters = fit.vcov_cluster.as_ref().map_or(0, |v| v.n_clusters);
    let se = fit.se_cluster(column).expect("kept column");
    let z = T::of(normal_quantile(1.0 - alpha / 2.0));
    Ok(TwfeResult {
        coefficient,
        se: Some(se),
        ci: Some((coefficient - z * se, coefficient + z * se)),
        n_obs: fit.n,
        n_clusters,
        assumption: Assumption::GroupTimeHomogeneity,
        caveat: TWFE_CAVEAT,
        dropped,
    })
}
