use crate::did::{
    Assumption, CellTable, CovariateMode, CovariateTerm, EstimatorKind, GroupTimeAtt, PairSpec, SMALL_CELL_WARNING,
};
use crate::error::{DidError, Result};
use crate::inference::normal_quantile;
use crate::panel::{subset_for, CovValue, CovariateKind, GroupLabel, GroupPredicate, PanelDataset};
use crate::regress::{build_design, ols_fit_named, DesignSpec, OlsFit, Term};
use crate::scalar::Scalar;

/// The four cell means of a 2×2 comparison.
pub(crate) struct FourCells<T> {
    pub treated_t: (T, usize),
    pub treated_base: (T, usize),
    pub control_t: (T, usize),
    pub control_base: (T, usize),
}

impl<T: Scalar> FourCells<T> {
    pub fn from_table(table: &CellTable<T>, pair: &PairSpec, min_cell: usize) -> Result<Self> {
        let treated = GroupPredicate::Group(GroupLabel::FirstTreatedAt(pair.g));
        let control = GroupPredicate::Control(pair.cohort());
        Ok(Self {
            treated_t: table.mean(&treated, pair.t, min_cell)?,
            treated_base: table.mean(&treated, pair.base, min_cell)?,
            control_t: table.mean(&control, pair.t, min_cell)?,
            control_base: table.mean(&control, pair.base, min_cell)?,
        })
    }

    pub fn did(&self) -> T {
        (self.treated_t.0 - self.treated_base.0) - (self.control_t.0 - self.control_base.0)
    }

    pub fn small_cell_warnings(&self, pair: &PairSpec) -> Vec<String> {
        let cells = [
            ("treated", pair.t, self.treated_t.1),
            ("treated", pair.base, self.treated_base.1),
            ("control", pair.t, self.control_t.1),
            ("control", pair.base, self.control_base.1),
        ];
        cells
            .iter()
            .filter(|c| c.2 < SMALL_CELL_WARNING)
            .map(|(who, time, n)| {
                format!(
                    "ATT({}, {}): {who} cell at period {time} has only {n} records",
                    pair.g, pair.t
                )
            })
            .collect()
    }
}

fn base_att<T: Scalar>(pair: &PairSpec, estimate: T, cells: &FourCells<T>, estimator: EstimatorKind) -> GroupTimeAtt<T> {
    GroupTimeAtt {
        g: pair.g,
        t: pair.t,
        w: pair.t - pair.g,
        estimate,
        se: None,
        ci: None,
        n_treated: cells.treated_t.1,
        n_control: cells.control_t.1,
        control_rule: pair.control,
        base_period: pair.base,
        estimator,
        assumptions: vec![Assumption::Consistency, Assumption::ParallelTrends],
        warnings: cells.small_cell_warnings(pair),
    }
}

pub(crate) fn means_from_table<T: Scalar>(table: &CellTable<T>, pair: &PairSpec, min_cell: usize) -> Result<GroupTimeAtt<T>> {
    let cells = FourCells::from_table(table, pair, min_cell)?;
    Ok(base_att(pair, cells.did(), &cells, EstimatorKind::Means))
}

/// Difference of mean changes: treated cohort minus comparison cohort.
pub fn att_2x2_means<T: Scalar>(data: &PanelDataset<T>, pair: &PairSpec) -> Result<GroupTimeAtt<T>> {
    means_from_table(&CellTable::build(data), pair, 1)
}

fn covariate_terms(covariates: &[CovariateTerm], mode: CovariateMode, t: i64) -> Vec<Term> {
    let mut terms = Vec::new();
    if mode == CovariateMode::None {
        return terms;
    }
    for c in covariates {
        terms.push(match c.spline_knots {
            Some(k) => Term::SplineBasis(c.name.clone(), k),
            None => Term::Covariate(c.name.clone()),
        });
    }
    if mode == CovariateMode::InteractedWithTime {
        for c in covariates {
            terms.push(match c.spline_knots {
                Some(k) => Term::SplineByTime(c.name.clone(), k, t),
                None => Term::CovariateByTime(c.name.clone(), t),
            });
        }
    }
    terms
}

/// Attaches a normal-approximation interval from the unit-clustered sandwich
/// when the fit has enough clusters and residual degrees of freedom.
fn clustered_interval<T: Scalar>(
    fit: OlsFit<T>,
    clusters: &[usize],
    column: usize,
    alpha: f64,
    warnings: &mut Vec<String>,
) -> (Option<T>, Option<(T, T)>) {
    let coef = fit.coefficients[column].expect("caller checked identification");
    match fit.with_cluster_vcov(clusters) {
        Ok(fit) => {
            let se = fit.se_cluster(column).expect("kept column");
            let z = T::of(normal_quantile(1.0 - alpha / 2.0));
            (Some(se), Some((coef - z * se, coef + z * se)))
        }
        Err(e @ (DidError::TooFewClusters(_) | DidError::NoResidualDf { .. })) => {
            warnings.push(format!("no cluster-robust interval: {e}"));
            (None, None)
        }
        Err(e) => {
            warnings.push(format!("cluster-robust covariance failed: {e}"));
            (None, None)
        }
    }
}

/// Coefficient on `I{G = g} × I{T = t}` in the 2×2 regression, with a
/// unit-clustered CR1 interval.
pub fn att_2x2_regression<T: Scalar>(
    data: &PanelDataset<T>,
    pair: &PairSpec,
    covariates: &[CovariateTerm],
    mode: CovariateMode,
    alpha: f64,
) -> Result<GroupTimeAtt<T>> {
    let sub = subset_for(data, &pair.cohort())?;
    let cells = FourCells::from_table(&CellTable::build(&sub), pair, 1)?;

    let group = Term::GroupIndicator(GroupLabel::FirstTreatedAt(pair.g));
    let time = Term::TimeIndicator(pair.t);
    let mut terms = vec![
        Term::Intercept,
        group.clone(),
        time.clone(),
        Term::interaction(group, time),
    ];
    let effective_mode = if covariates.is_empty() { CovariateMode::None } else { mode };
    terms.extend(covariate_terms(covariates, effective_mode, pair.t));
    let design = build_design(&sub, &DesignSpec::new(terms))?;
    let fit = design.fit()?;
    let column = 3;
    let estimate = fit.coefficients[column].ok_or_else(|| DidError::Unidentified(fit.column_names[column].clone()))?;

    let mut att = base_att(pair, estimate, &cells, EstimatorKind::Regression);
    att.assumptions = match effective_mode {
        CovariateMode::None => vec![Assumption::Consistency, Assumption::ParallelTrends],
        CovariateMode::Additive => vec![
            Assumption::Consistency,
            Assumption::ParallelTrends,
            Assumption::CovariateHomogeneity,
        ],
        CovariateMode::InteractedWithTime => vec![
            Assumption::Consistency,
            Assumption::ConditionalParallelTrends,
            Assumption::CovariateHomogeneity,
        ],
    };
    if !fit.dropped.is_empty() {
        att.warnings.push(format!(
            "ATT({}, {}): dropped collinear columns {}",
            pair.g,
            pair.t,
            fit.dropped_names().join(", ")
        ));
    }
    let (se, ci) = clustered_interval(fit, &design.cluster_ids, column, alpha, &mut att.warnings);
    att.se = se;
    att.ci = ci;
    Ok(att)
}

/// Outcome-regression standardization: per-period linear outcome models fit
/// on comparison units, averaged over the treated cohort's covariates.
pub fn att_or_adjusted<T: Scalar>(
    data: &PanelDataset<T>,
    pair: &PairSpec,
    covariates: &[CovariateTerm],
    min_cell: usize,
) -> Result<GroupTimeAtt<T>> {
    let sub = subset_for(data, &pair.cohort())?;
    let cells = FourCells::from_table(&CellTable::build(&sub), pair, min_cell)?;
    let treated_label = GroupLabel::FirstTreatedAt(pair.g);
    let is_treated = |unit: usize| sub.group(unit) == treated_label;

    check_support(&sub, pair, covariates, &is_treated)?;

    let mut terms = vec![Term::Intercept];
    terms.extend(covariate_terms(covariates, CovariateMode::Additive, pair.t));
    let design = build_design(&sub, &DesignSpec::new(terms))?;

    let period_fit = |period: i64| -> Result<Vec<T>> {
        let rows: Vec<usize> = sub
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.time == period && !is_treated(r.unit))
            .map(|(i, _)| i)
            .collect();
        let cols: Vec<usize> = (0..design.x.cols()).collect();
        let x = design.x.select(&rows, &cols);
        let y: Vec<T> = rows.iter().map(|&i| design.y[i]).collect();
        let fit = ols_fit_named(&x, &y, design.column_names.clone())?;
        if !fit.dropped.is_empty() {
            return Err(DidError::RankDeficient(format!(
                "period {period}: {}",
                fit.dropped_names().join(", ")
            )));
        }
        Ok(fit.coefficients.iter().map(|c| c.expect("full rank")).collect())
    };
    let beta_t = period_fit(pair.t)?;
    let beta_base = period_fit(pair.base)?;

    // One covariate profile per treated unit, from its period-t record when
    // observed and its base-period record otherwise.
    let mut total = T::zero();
    let mut n_units = 0usize;
    for unit in 0..sub.n_units() {
        if !is_treated(unit) {
            continue;
        }
        let Some(rec) = sub.find_record(unit, pair.t).or_else(|| sub.find_record(unit, pair.base)) else {
            continue;
        };
        let row = design.x.row(rec);
        let diff: T = row
            .iter()
            .zip(beta_t.iter().zip(&beta_base))
            .map(|(&x, (&bt, &bb))| x * (bt - bb))
            .sum();
        total = total + diff;
        n_units += 1;
    }
    let predicted_change = total / T::of_usize(n_units);
    let observed_change = cells.treated_t.0 - cells.treated_base.0;

    let mut att = base_att(pair, observed_change - predicted_change, &cells, EstimatorKind::OutcomeRegression);
    att.assumptions = vec![
        Assumption::Consistency,
        Assumption::ConditionalParallelTrends,
        Assumption::CommonSupport,
    ];
    Ok(att)
}

fn check_support<T: Scalar>(
    sub: &PanelDataset<T>,
    pair: &PairSpec,
    covariates: &[CovariateTerm],
    is_treated: &dyn Fn(usize) -> bool,
) -> Result<()> {
    for c in covariates {
        let idx = sub.covariate_index(&c.name)?;
        let spec = &sub.schema()[idx];
        let CovariateKind::Categorical(levels) = &spec.kind else {
            continue;
        };
        if c.spline_knots.is_some() {
            return Err(DidError::CategoricalNotAllowed {
                name: c.name.clone(),
                context: "a spline term",
            });
        }
        let mut treated_levels = vec![false; levels.len()];
        let mut control_levels = [vec![false; levels.len()], vec![false; levels.len()]];
        for (i, r) in sub.records().iter().enumerate() {
            let CovValue::Level(l) = sub.record_covariates(i)[idx] else {
                continue;
            };
            if is_treated(r.unit) {
                treated_levels[l as usize] = true;
            } else {
                let slot = usize::from(r.time != pair.t);
                control_levels[slot][l as usize] = true;
            }
        }
        for (slot, period) in [pair.t, pair.base].into_iter().enumerate() {
            if let Some(l) = (0..levels.len()).find(|&l| treated_levels[l] && !control_levels[slot][l]) {
                return Err(DidError::SupportViolation {
                    covariate: c.name.clone(),
                    level: levels[l].clone(),
                    time: period,
                });
            }
        }
    }
    Ok(())
}

/// Per-level unadjusted 2×2 regressions for a categorical covariate.
#[derive(Debug, Clone)]
pub struct StratifiedAtt<T> {
    /// Levels in schema order with their estimates.
    pub by_level: Vec<(String, GroupTimeAtt<T>)>,
    /// Levels that could not be estimated, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl<T> StratifiedAtt<T> {
    pub fn get(&self, level: &str) -> Option<&GroupTimeAtt<T>> {
        self.by_level.iter().find(|(l, _)| l == level).map(|(_, a)| a)
    }
}

pub fn stratified_att<T: Scalar>(
    data: &PanelDataset<T>,
    pair: &PairSpec,
    stratum_covariate: &str,
    alpha: f64,
) -> Result<StratifiedAtt<T>> {
    let idx = data.covariate_index(stratum_covariate)?;
    let CovariateKind::Categorical(levels) = &data.schema()[idx].kind else {
        return Err(DidError::NumericNotAllowed {
            name: stratum_covariate.to_string(),
            context: "stratification",
        });
    };
    let mut out = StratifiedAtt {
        by_level: Vec::new(),
        skipped: Vec::new(),
    };
    for (l, level) in levels.iter().enumerate() {
        let stratum = data.filter_records(|_, cov, _| cov[idx] == CovValue::Level(l as u32));
        match att_2x2_regression(&stratum, pair, &[], CovariateMode::None, alpha) {
            Ok(att) => out.by_level.push((level.clone(), att)),
            Err(e) if e.is_inestimable() => {
                log::debug!("stratum {stratum_covariate}={level} skipped: {e}");
                out.skipped.push((level.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
