//! End-to-end estimation: grid, aggregation, bootstrap intervals and the
//! optional diagnostics, as run by the command-line tool.

use serde::{Deserialize, Serialize};

use crate::did::{
    aggregate, aggregate_event, att_gt_all, pretrend_atts, stratified_att, twfe_estimate, AggregationResult,
    ClusterLevel, EstimatorConfig, EventCurve, GridResult, PairSpec, StratifiedAtt, TwfeResult,
};
use crate::error::{DidError, Result};
use crate::inference::{cluster_bootstrap, pretrend_wald_test, BootstrapPlan, WaldTest};
use crate::linalg::Matrix;
use crate::panel::PanelDataset;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EstimationRequest {
    pub estimator: EstimatorConfig,
    /// Percentile intervals for every reported statistic when present.
    pub bootstrap: Option<BootstrapPlan>,
    /// Placebo estimates and the joint Wald test.
    pub pretest: bool,
    /// Categorical covariate for per-level estimates of every post pair.
    pub stratify: Option<String>,
    pub twfe: bool,
}

/// How an interval was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    PercentileBootstrap,
    ClusterRobustNormal,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub n_failed: usize,
    pub seed: u64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct PretrendOutput<T> {
    pub grid: GridResult<T>,
    pub curve: EventCurve<T>,
    pub wald: Option<WaldTest<T>>,
}

#[derive(Debug, Clone)]
pub struct StratifiedEntry<T> {
    pub g: i64,
    pub t: i64,
    pub result: StratifiedAtt<T>,
}

#[derive(Debug, Clone)]
pub struct EstimationOutput<T> {
    pub grid: GridResult<T>,
    pub aggregation: AggregationResult<T>,
    pub interval_method: IntervalMethod,
    pub bootstrap: Option<BootstrapSummary>,
    pub pretrend: Option<PretrendOutput<T>>,
    pub stratified: Vec<StratifiedEntry<T>>,
    pub twfe: Option<TwfeResult<T>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StatKey {
    Att(i64, i64),
    Event(i64),
    Overall,
    PreAtt(i64, i64),
    PreEvent(i64),
}

struct Evaluated<T> {
    post: Option<(GridResult<T>, AggregationResult<T>)>,
    pre: Option<(GridResult<T>, EventCurve<T>)>,
}

fn evaluate<T: Scalar>(data: &PanelDataset<T>, config: &EstimatorConfig, post: bool, pre: bool) -> Result<Evaluated<T>> {
    let post = if post {
        let grid = att_gt_all(data, config, false)?;
        let agg = aggregate(&grid.atts, &grid.group_sizes)?;
        Some((grid, agg))
    } else {
        None
    };
    let pre = if pre {
        let grid = pretrend_atts(data, config)?;
        let curve = aggregate_event(&grid.atts, &grid.group_sizes)?;
        Some((grid, curve))
    } else {
        None
    };
    Ok(Evaluated { post, pre })
}

fn missing(key: StatKey) -> DidError {
    DidError::NoEstimablePairs(format!("replicate lacks {key:?}"))
}

fn lookup<T: Scalar>(ev: &Evaluated<T>, key: StatKey) -> Result<T> {
    let value = match key {
        StatKey::Att(g, t) => ev.post.as_ref().and_then(|(grid, _)| grid.get(g, t)).map(|a| a.estimate),
        StatKey::Event(w) => ev
            .post
            .as_ref()
            .and_then(|(_, agg)| agg.event_curve.get(w))
            .map(|p| p.estimate),
        StatKey::Overall => ev.post.as_ref().and_then(|(_, agg)| agg.overall),
        StatKey::PreAtt(g, t) => ev.pre.as_ref().and_then(|(grid, _)| grid.get(g, t)).map(|a| a.estimate),
        StatKey::PreEvent(w) => ev.pre.as_ref().and_then(|(_, c)| c.get(w)).map(|p| p.estimate),
    };
    value.ok_or_else(|| missing(key))
}

fn keys_of<T: Scalar>(ev: &Evaluated<T>) -> Vec<StatKey> {
    let mut keys = Vec::new();
    if let Some((grid, agg)) = &ev.post {
        keys.extend(grid.atts.iter().map(|a| StatKey::Att(a.g, a.t)));
        keys.extend(agg.event_curve.points.iter().map(|p| StatKey::Event(p.w)));
        if agg.overall.is_some() {
            keys.push(StatKey::Overall);
        }
    }
    if let Some((grid, curve)) = &ev.pre {
        keys.extend(grid.atts.iter().map(|a| StatKey::PreAtt(a.g, a.t)));
        keys.extend(curve.points.iter().map(|p| StatKey::PreEvent(p.w)));
    }
    keys
}

struct BootstrapOut<T> {
    keys: Vec<StatKey>,
    ci_low: Vec<T>,
    ci_high: Vec<T>,
    covariance: Matrix<T>,
    summary: BootstrapSummary,
}

impl<T: Scalar> BootstrapOut<T> {
    fn index(&self, key: StatKey) -> usize {
        self.keys.iter().position(|k| *k == key).expect("key bootstrapped")
    }

    fn ci(&self, key: StatKey) -> (T, T) {
        let i = self.index(key);
        (self.ci_low[i], self.ci_high[i])
    }

    fn se(&self, key: StatKey) -> T {
        let i = self.index(key);
        self.covariance[(i, i)].sqrt()
    }
}

fn run_bootstrap<T: Scalar>(
    data: &PanelDataset<T>,
    config: &EstimatorConfig,
    plan: &BootstrapPlan,
    ev: &Evaluated<T>,
) -> Result<BootstrapOut<T>> {
    let keys = keys_of(ev);
    let (post, pre) = (ev.post.is_some(), ev.pre.is_some());
    let res = cluster_bootstrap(data, plan, |d| {
        let rep = evaluate(d, config, post, pre)?;
        keys.iter().map(|&k| lookup(&rep, k)).collect()
    })?;
    Ok(BootstrapOut {
        keys,
        ci_low: res.ci_low,
        ci_high: res.ci_high,
        covariance: res.covariance,
        summary: BootstrapSummary {
            replicates: res.n_replicates,
            n_failed: res.n_failed,
            seed: plan.seed,
            alpha: plan.alpha,
        },
    })
}

fn wald_for<T: Scalar>(curve: &EventCurve<T>, boot: &BootstrapOut<T>, warnings: &mut Vec<String>) -> Option<WaldTest<T>> {
    let idx: Vec<usize> = curve.points.iter().map(|p| boot.index(StatKey::PreEvent(p.w))).collect();
    let theta: Vec<T> = curve.points.iter().map(|p| p.estimate).collect();
    let cov = boot.covariance.select(&idx, &idx);
    match pretrend_wald_test(&theta, &cov) {
        Ok(w) => Some(w),
        Err(e) => {
            warnings.push(format!("pre-trend Wald test unavailable: {e}"));
            None
        }
    }
}

fn apply_pre_intervals<T: Scalar>(pre: &mut PretrendOutput<T>, boot: &BootstrapOut<T>) {
    for a in &mut pre.grid.atts {
        let key = StatKey::PreAtt(a.g, a.t);
        a.ci = Some(boot.ci(key));
        a.se = Some(boot.se(key));
    }
    for p in &mut pre.curve.points {
        p.ci = Some(boot.ci(StatKey::PreEvent(p.w)));
    }
}

/// Grid, aggregation and requested diagnostics with bootstrap intervals.
pub fn run_estimation<T: Scalar>(data: &PanelDataset<T>, request: &EstimationRequest) -> Result<EstimationOutput<T>> {
    let config = &request.estimator;
    config.validate()?;
    let mut ev = evaluate(data, config, true, request.pretest)?;
    let mut warnings = Vec::new();

    let boot = match &request.bootstrap {
        Some(plan) => Some(run_bootstrap(data, config, plan, &ev)?),
        None => None,
    };

    let (mut grid, mut aggregation) = ev.post.take().expect("post requested");
    let mut pretrend = ev.pre.take().map(|(grid, curve)| PretrendOutput {
        grid,
        curve,
        wald: None,
    });

    let interval_method = if let Some(boot) = &boot {
        for a in &mut grid.atts {
            let key = StatKey::Att(a.g, a.t);
            a.ci = Some(boot.ci(key));
            a.se = Some(boot.se(key));
        }
        for p in &mut aggregation.event_curve.points {
            p.ci = Some(boot.ci(StatKey::Event(p.w)));
        }
        if aggregation.overall.is_some() {
            aggregation.overall_ci = Some(boot.ci(StatKey::Overall));
        }
        if let Some(pre) = &mut pretrend {
            apply_pre_intervals(pre, boot);
            pre.wald = wald_for(&pre.curve, boot, &mut warnings);
        }
        if boot.summary.n_failed > 0 {
            warnings.push(format!(
                "{} of {} bootstrap replicates were inestimable and dropped",
                boot.summary.n_failed, boot.summary.replicates
            ));
        }
        IntervalMethod::PercentileBootstrap
    } else if grid.atts.iter().any(|a| a.ci.is_some()) {
        IntervalMethod::ClusterRobustNormal
    } else {
        if pretrend.is_some() {
            warnings.push("pre-trend Wald test needs bootstrap replicates".into());
        }
        IntervalMethod::None
    };

    let mut stratified = Vec::new();
    if let Some(name) = &request.stratify {
        for a in grid.atts.iter().filter(|a| a.w >= 0) {
            let mut pair = PairSpec::new(a.g, a.t, a.base_period, config.control_rule);
            pair.anticipation = config.anticipation;
            let result = stratified_att(data, &pair, name, config.alpha)?;
            for (level, reason) in &result.skipped {
                warnings.push(format!("stratum {name}={level} for ATT({}, {}) skipped: {reason}", a.g, a.t));
            }
            stratified.push(StratifiedEntry { g: a.g, t: a.t, result });
        }
    }

    let twfe = if request.twfe {
        let res = twfe_estimate(data, ClusterLevel::Unit, config.alpha)?;
        if !res.dropped.is_empty() {
            warnings.push(format!("TWFE dropped collinear columns {}", res.dropped.join(", ")));
        }
        Some(res)
    } else {
        None
    };

    for p in aggregation.event_curve.points.iter().filter(|p| p.partial) {
        warnings.push(format!("event time {} is only partially covered by cohorts", p.w));
    }
    let mut all = grid.warnings.clone();
    if let Some(pre) = &pretrend {
        all.extend(pre.grid.warnings.iter().cloned());
    }
    all.extend(warnings);

    Ok(EstimationOutput {
        grid,
        aggregation,
        interval_method,
        bootstrap: boot.map(|b| b.summary),
        pretrend,
        stratified,
        twfe,
        warnings: all,
    })
}

/// Placebo estimates, their event curve and the joint Wald test.
pub fn run_pretest<T: Scalar>(
    data: &PanelDataset<T>,
    config: &EstimatorConfig,
    plan: &BootstrapPlan,
) -> Result<(PretrendOutput<T>, BootstrapSummary, Vec<String>)> {
    config.validate()?;
    let mut ev = evaluate(data, config, false, true)?;
    let boot = run_bootstrap(data, config, plan, &ev)?;
    let (grid, curve) = ev.pre.take().expect("pre requested");
    let mut out = PretrendOutput { grid, curve, wald: None };
    let mut warnings = out.grid.warnings.clone();
    apply_pre_intervals(&mut out, &boot);
    out.wald = wald_for(&out.curve, &boot, &mut warnings);
    if boot.summary.n_failed > 0 {
        warnings.push(format!(
            "{} of {} bootstrap replicates were inestimable and dropped",
            boot.summary.n_failed, boot.summary.replicates
        ));
    }
    Ok((out, boot.summary, warnings))
}
