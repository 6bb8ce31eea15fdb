use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::did::twobytwo::{att_2x2_regression, att_or_adjusted, means_from_table};
use crate::did::{CellTable, EstimatorConfig, EstimatorKind, GroupTimeAtt, PairSpec};
use crate::error::{DidError, Result};
use crate::panel::PanelDataset;
use crate::scalar::Scalar;

/// A (g, t) comparison that could not be estimated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedPair {
    pub g: i64,
    pub t: i64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct GridResult<T> {
    /// Estimates ordered by (g, t).
    pub atts: Vec<GroupTimeAtt<T>>,
    pub skipped: Vec<SkippedPair>,
    /// Treated-unit counts at each cohort's first treated period.
    pub group_sizes: BTreeMap<i64, usize>,
    /// Per-estimate warnings followed by skip reasons.
    pub warnings: Vec<String>,
}

impl<T> GridResult<T> {
    pub fn get(&self, g: i64, t: i64) -> Option<&GroupTimeAtt<T>> {
        self.atts.iter().find(|a| a.g == g && a.t == t)
    }
}

/// Every (g, t, base) comparison implied by the observed period range.
///
/// Post-treatment pairs run from `g - anticipation` to the last period with
/// base `g - 1 - anticipation`. Pre-treatment placebos (when `include_pre`)
/// run from the second observed period up to `g - anticipation - 1`, each
/// against the immediately preceding period.
pub fn grid_pairs<T: Scalar>(data: &PanelDataset<T>, config: &EstimatorConfig, include_pre: bool) -> Vec<PairSpec> {
    let (Some(first), Some(last)) = (data.first_period(), data.last_period()) else {
        return Vec::new();
    };
    let a = config.anticipation;
    let mut pairs = Vec::new();
    for g in data.treated_groups() {
        let onset = g - a;
        if include_pre {
            for t in (first + 1)..onset.min(last + 1) {
                pairs.push(pair(g, t, t - 1, config));
            }
        }
        for t in onset.max(first)..=last {
            pairs.push(pair(g, t, onset - 1, config));
        }
    }
    pairs
}

fn pair(g: i64, t: i64, base: i64, config: &EstimatorConfig) -> PairSpec {
    let mut p = PairSpec::new(g, t, base, config.control_rule);
    p.anticipation = config.anticipation;
    p
}

fn is_skippable(e: &DidError) -> bool {
    matches!(
        e,
        DidError::EmptyCell { .. } | DidError::SmallCell { .. } | DidError::EmptyCohort { .. }
    )
}

fn estimate_with<T: Scalar>(
    data: &PanelDataset<T>,
    table: &CellTable<T>,
    pair: &PairSpec,
    config: &EstimatorConfig,
) -> Result<GroupTimeAtt<T>> {
    // The cell check runs for every estimator so min_cell applies uniformly.
    let means = means_from_table(table, pair, config.min_cell)?;
    match config.estimator {
        EstimatorKind::Means => Ok(means),
        EstimatorKind::Regression => {
            att_2x2_regression(data, pair, &config.covariates, config.covariate_mode, config.alpha)
        }
        EstimatorKind::OutcomeRegression => att_or_adjusted(data, pair, &config.covariates, config.min_cell),
    }
}

fn estimate_pair<T: Scalar>(
    data: &PanelDataset<T>,
    table: &CellTable<T>,
    pair: &PairSpec,
    config: &EstimatorConfig,
) -> Result<GroupTimeAtt<T>> {
    if config.require_balanced {
        let sub = data.balanced_on(&[pair.base, pair.t]);
        let table = CellTable::build(&sub);
        estimate_with(&sub, &table, pair, config)
    } else {
        estimate_with(data, table, pair, config)
    }
}

fn run_pairs<T: Scalar>(data: &PanelDataset<T>, config: &EstimatorConfig, pairs: &[PairSpec]) -> Result<GridResult<T>> {
    config.validate()?;
    let table = CellTable::build(data);
    let results: Vec<Result<GroupTimeAtt<T>>> = pairs
        .par_iter()
        .map(|p| estimate_pair(data, &table, p, config))
        .collect();

    let mut out = GridResult {
        atts: Vec::new(),
        skipped: Vec::new(),
        group_sizes: data.cohort_sizes(),
        warnings: Vec::new(),
    };
    for (p, res) in pairs.iter().zip(results) {
        match res {
            Ok(att) => out.atts.push(att),
            Err(e) if is_skippable(&e) => {
                log::debug!("skipping ATT({}, {}): {e}", p.g, p.t);
                out.skipped.push(SkippedPair {
                    g: p.g,
                    t: p.t,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    for att in &out.atts {
        out.warnings.extend(att.warnings.iter().cloned());
    }
    for s in &out.skipped {
        out.warnings.push(format!("skipped ATT({}, {}): {}", s.g, s.t, s.reason));
    }
    Ok(out)
}

/// Estimates ATT(g, t) for every identifiable pair.
pub fn att_gt_all<T: Scalar>(data: &PanelDataset<T>, config: &EstimatorConfig, include_pre: bool) -> Result<GridResult<T>> {
    if data.treated_groups().is_empty() {
        return Err(DidError::NoEstimablePairs("no treated cohorts in the data".into()));
    }
    let pairs = grid_pairs(data, config, include_pre);
    let out = run_pairs(data, config, &pairs)?;
    if out.atts.is_empty() {
        return Err(DidError::NoEstimablePairs(format!(
            "all {} candidate pairs were skipped",
            pairs.len()
        )));
    }
    Ok(out)
}

/// Placebo estimates for periods before each cohort's onset.
pub fn pretrend_atts<T: Scalar>(data: &PanelDataset<T>, config: &EstimatorConfig) -> Result<GridResult<T>> {
    let onset = |p: &PairSpec| p.g - config.anticipation;
    let pairs: Vec<PairSpec> = grid_pairs(data, config, true)
        .into_iter()
        .filter(|p| p.t < onset(p))
        .collect();
    if pairs.is_empty() {
        return Err(DidError::NoPrePeriods);
    }
    let out = run_pairs(data, config, &pairs)?;
    if out.atts.is_empty() {
        return Err(DidError::NoPrePeriods);
    }
    Ok(out)
}
