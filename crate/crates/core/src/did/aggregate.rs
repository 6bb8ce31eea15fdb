use std::collections::{BTreeMap, BTreeSet};

use crate::did::GroupTimeAtt;
use crate::error::{DidError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct EventPoint<T> {
    pub w: i64,
    pub estimate: T,
    pub ci: Option<(T, T)>,
    /// Contributing cohorts, ascending.
    pub groups: Vec<i64>,
    /// Renormalized weight of each contributing cohort.
    pub weights: Vec<T>,
    /// Some cohort with estimates elsewhere in the grid lacks one at this `w`
    /// although `g + w` lies inside the observed window.
    pub partial: bool,
}

/// Event-time curve ordered by `w`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventCurve<T> {
    pub points: Vec<EventPoint<T>>,
}

impl<T: Scalar> EventCurve<T> {
    /// A curve from bare `(w, estimate)` values, e.g. published estimates.
    pub fn from_estimates(values: &[(i64, T)]) -> Self {
        let mut points: Vec<EventPoint<T>> = values
            .iter()
            .map(|&(w, estimate)| EventPoint {
                w,
                estimate,
                ci: None,
                groups: Vec::new(),
                weights: Vec::new(),
                partial: false,
            })
            .collect();
        points.sort_by_key(|p| p.w);
        Self { points }
    }

    pub fn get(&self, w: i64) -> Option<&EventPoint<T>> {
        self.points.iter().find(|p| p.w == w)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult<T> {
    pub event_curve: EventCurve<T>,
    /// Cohort shares among ever-treated units with at least one estimate.
    pub group_weights: BTreeMap<i64, T>,
    /// Simple mean of the curve over `w >= 0`; absent for placebo-only input.
    pub overall: Option<T>,
    pub overall_ci: Option<(T, T)>,
    /// `(g, w)` pairs entering the curve.
    pub included_pairs: Vec<(i64, i64)>,
}

fn check_inputs<T>(atts: &[GroupTimeAtt<T>], group_sizes: &BTreeMap<i64, usize>) -> Result<()> {
    let Some(first) = atts.first() else {
        return Err(DidError::EmptyInput("group-time estimates"));
    };
    if let Some(a) = atts
        .iter()
        .find(|a| a.estimator != first.estimator || a.control_rule != first.control_rule)
    {
        return Err(DidError::InvalidConfig(format!(
            "ATT({}, {}) was estimated with different settings than ATT({}, {})",
            a.g, a.t, first.g, first.t
        )));
    }
    if let Some(a) = atts.iter().find(|a| !group_sizes.contains_key(&a.g)) {
        return Err(DidError::EmptyCohort { which: "treated", g: a.g });
    }
    Ok(())
}

/// Cohort shares `n_g / Σ n_g` over cohorts present in `atts`.
pub fn group_weights<T: Scalar>(atts: &[GroupTimeAtt<T>], group_sizes: &BTreeMap<i64, usize>) -> Result<BTreeMap<i64, T>> {
    check_inputs(atts, group_sizes)?;
    let groups: BTreeSet<i64> = atts.iter().map(|a| a.g).collect();
    let total: usize = groups.iter().map(|g| group_sizes[g]).sum();
    if total == 0 {
        return Err(DidError::InvalidConfig("all cohort sizes are zero".into()));
    }
    Ok(groups
        .into_iter()
        .map(|g| (g, T::of_usize(group_sizes[&g]) / T::of_usize(total)))
        .collect())
}

/// Cohort-size weighted mean of ATT(g, g + w) for each `w`, weights
/// renormalized over the cohorts estimated at that `w`.
pub fn aggregate_event<T: Scalar>(atts: &[GroupTimeAtt<T>], group_sizes: &BTreeMap<i64, usize>) -> Result<EventCurve<T>> {
    check_inputs(atts, group_sizes)?;
    let t_min = atts.iter().map(|a| a.t).min().expect("nonempty");
    let t_max = atts.iter().map(|a| a.t).max().expect("nonempty");
    let all_groups: BTreeSet<i64> = atts.iter().map(|a| a.g).collect();

    let mut by_w: BTreeMap<i64, BTreeMap<i64, T>> = BTreeMap::new();
    for a in atts {
        if by_w.entry(a.w).or_default().insert(a.g, a.estimate).is_some() {
            return Err(DidError::InvalidConfig(format!("duplicate estimate for ATT({}, {})", a.g, a.t)));
        }
    }

    let mut points = Vec::with_capacity(by_w.len());
    for (w, per_group) in by_w {
        let total: usize = per_group.keys().map(|g| group_sizes[g]).sum();
        if total == 0 {
            log::warn!("event time {w}: contributing cohorts have zero size; omitted");
            continue;
        }
        let total = T::of_usize(total);
        let mut estimate = T::zero();
        let mut groups = Vec::with_capacity(per_group.len());
        let mut weights = Vec::with_capacity(per_group.len());
        for (&g, &att) in &per_group {
            let weight = T::of_usize(group_sizes[&g]) / total;
            estimate = estimate + weight * att;
            groups.push(g);
            weights.push(weight);
        }
        let partial = all_groups
            .iter()
            .any(|g| !per_group.contains_key(g) && (t_min..=t_max).contains(&(g + w)));
        points.push(EventPoint {
            w,
            estimate,
            ci: None,
            groups,
            weights,
            partial,
        });
    }
    Ok(EventCurve { points })
}

/// Unweighted mean of the curve over `w >= 0`.
pub fn aggregate_overall<T: Scalar>(curve: &EventCurve<T>) -> Result<T> {
    let post: Vec<T> = curve.points.iter().filter(|p| p.w >= 0).map(|p| p.estimate).collect();
    if post.is_empty() {
        return Err(DidError::EmptyInput("post-treatment event curve"));
    }
    let n = T::of_usize(post.len());
    Ok(post.into_iter().sum::<T>() / n)
}

pub fn aggregate<T: Scalar>(atts: &[GroupTimeAtt<T>], group_sizes: &BTreeMap<i64, usize>) -> Result<AggregationResult<T>> {
    let event_curve = aggregate_event(atts, group_sizes)?;
    let group_weights = group_weights(atts, group_sizes)?;
    let overall = match aggregate_overall(&event_curve) {
        Ok(v) => Some(v),
        Err(DidError::EmptyInput(_)) => None,
        Err(e) => return Err(e),
    };
    let included_pairs = event_curve
        .points
        .iter()
        .flat_map(|p| p.groups.iter().map(move |&g| (g, p.w)))
        .collect();
    Ok(AggregationResult {
        event_curve,
        group_weights,
        overall,
        overall_ci: None,
        included_pairs,
    })
}
