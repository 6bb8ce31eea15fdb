use std::collections::{BTreeMap, HashSet};

use crate::error::{DidError, Result};
use crate::linalg::Matrix;
use crate::panel::{CovValue, CovariateKind, GroupLabel, PanelDataset};
use crate::regress::ols::{ols_fit_named, OlsFit};
use crate::regress::spline::RcsBasis;
use crate::scalar::Scalar;

/// One block of design columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Intercept,
    /// `I{G = g}` for the unit's group label.
    GroupIndicator(GroupLabel),
    /// `I{T = t}`.
    TimeIndicator(i64),
    /// `I{t >= g(unit)}`; zero for never-treated units.
    TreatedPostIndicator,
    /// Numeric covariate, or reference-coded dummies for a categorical one.
    Covariate(String),
    CovariateByTime(String, i64),
    SplineBasis(String, usize),
    SplineByTime(String, usize, i64),
    Interaction(Box<Term>, Box<Term>),
}

impl Term {
    pub fn interaction(a: Term, b: Term) -> Self {
        Term::Interaction(Box::new(a), Box::new(b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DesignSpec {
    pub terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }
}

/// Expanded design: one row per record of the source dataset.
#[derive(Debug, Clone)]
pub struct Design<T> {
    pub x: Matrix<T>,
    pub y: Vec<T>,
    /// Cluster id per row; the unit index by default.
    pub cluster_ids: Vec<usize>,
    pub column_names: Vec<String>,
}

impl<T: Scalar> Design<T> {
    pub fn fit(&self) -> Result<OlsFit<T>> {
        ols_fit_named(&self.x, &self.y, self.column_names.clone())
    }

    /// OLS with the unit-clustered sandwich attached.
    pub fn fit_clustered(&self) -> Result<OlsFit<T>> {
        self.fit()?.with_cluster_vcov(&self.cluster_ids)
    }
}

struct Column<T> {
    name: String,
    values: Vec<T>,
}

struct Expander<'a, T> {
    data: &'a PanelDataset<T>,
    splines: BTreeMap<(String, usize), RcsBasis<T>>,
}

impl<'a, T: Scalar> Expander<'a, T> {
    fn numeric_values(&self, name: &str, context: &'static str) -> Result<Vec<T>> {
        let idx = self.data.covariate_index(name)?;
        if !matches!(self.data.schema()[idx].kind, CovariateKind::Numeric) {
            return Err(DidError::CategoricalNotAllowed {
                name: name.to_string(),
                context,
            });
        }
        Ok((0..self.data.n_records())
            .map(|i| match self.data.record_covariates(i)[idx] {
                CovValue::Num(v) => v,
                CovValue::Level(_) => unreachable!("schema says numeric"),
            })
            .collect())
    }

    fn spline(&mut self, name: &str, k: usize) -> Result<&RcsBasis<T>> {
        let key = (name.to_string(), k);
        if !self.splines.contains_key(&key) {
            let x = self.numeric_values(name, "a spline term")?;
            self.splines.insert(key.clone(), RcsBasis::from_data(&x, k)?);
        }
        Ok(&self.splines[&key])
    }

    fn time_indicator(&self, t: i64) -> Vec<T> {
        self.data
            .records()
            .iter()
            .map(|r| if r.time == t { T::one() } else { T::zero() })
            .collect()
    }

    fn expand(&mut self, term: &Term) -> Result<Vec<Column<T>>> {
        let data = self.data;
        let recs = data.records();
        let ind = |b: bool| if b { T::one() } else { T::zero() };
        Ok(match term {
            Term::Intercept => vec![Column {
                name: "(Intercept)".into(),
                values: vec![T::one(); recs.len()],
            }],
            Term::GroupIndicator(label) => vec![Column {
                name: format!("I{{G={label}}}"),
                values: recs.iter().map(|r| ind(data.group(r.unit) == *label)).collect(),
            }],
            Term::TimeIndicator(t) => vec![Column {
                name: format!("I{{T={t}}}"),
                values: self.time_indicator(*t),
            }],
            Term::TreatedPostIndicator => vec![Column {
                name: "I{t>=g}".into(),
                values: recs.iter().map(|r| ind(data.group(r.unit).treated_at(r.time))).collect(),
            }],
            Term::Covariate(name) => {
                let idx = data.covariate_index(name)?;
                match &data.schema()[idx].kind {
                    CovariateKind::Numeric => vec![Column {
                        name: name.clone(),
                        values: self.numeric_values(name, "a covariate term")?,
                    }],
                    CovariateKind::Categorical(levels) => (1..levels.len())
                        .map(|l| Column {
                            name: format!("{name}={}", levels[l]),
                            values: (0..recs.len())
                                .map(|i| ind(data.record_covariates(i)[idx] == CovValue::Level(l as u32)))
                                .collect(),
                        })
                        .collect(),
                }
            }
            Term::CovariateByTime(name, t) => {
                let base = self.expand(&Term::Covariate(name.clone()))?;
                self.times(base, *t)
            }
            Term::SplineBasis(name, k) => {
                let x = self.numeric_values(name, "a spline term")?;
                let basis = self.spline(name, *k)?;
                let m = basis.eval(&x);
                (0..m.cols())
                    .map(|c| Column {
                        name: format!("rcs({name},{k})[{}]", c + 1),
                        values: m.column(c),
                    })
                    .collect()
            }
            Term::SplineByTime(name, k, t) => {
                let base = self.expand(&Term::SplineBasis(name.clone(), *k))?;
                self.times(base, *t)
            }
            Term::Interaction(a, b) => {
                let left = self.expand(a)?;
                let right = self.expand(b)?;
                let mut out = Vec::with_capacity(left.len() * right.len());
                for l in &left {
                    for r in &right {
                        out.push(Column {
                            name: format!("{}:{}", l.name, r.name),
                            values: l.values.iter().zip(&r.values).map(|(&u, &v)| u * v).collect(),
                        });
                    }
                }
                out
            }
        })
    }

    fn times(&self, cols: Vec<Column<T>>, t: i64) -> Vec<Column<T>> {
        let ti = self.time_indicator(t);
        cols.into_iter()
            .map(|c| Column {
                name: format!("{}:I{{T={t}}}", c.name),
                values: c.values.iter().zip(&ti).map(|(&u, &v)| u * v).collect(),
            })
            .collect()
    }
}

/// Expands `spec` over every record of `data`.
pub fn build_design<T: Scalar>(data: &PanelDataset<T>, spec: &DesignSpec) -> Result<Design<T>> {
    let mut ex = Expander {
        data,
        splines: BTreeMap::new(),
    };
    let mut columns = Vec::new();
    for term in &spec.terms {
        columns.extend(ex.expand(term)?);
    }
    let mut seen = HashSet::new();
    for c in &columns {
        if !seen.insert(c.name.as_str()) {
            return Err(DidError::InvalidConfig(format!("duplicate design column `{}`", c.name)));
        }
    }
    let n = data.n_records();
    let p = columns.len();
    let mut x = Matrix::zeros(n, p);
    for (j, c) in columns.iter().enumerate() {
        for i in 0..n {
            x[(i, j)] = c.values[i];
        }
    }
    Ok(Design {
        x,
        y: data.records().iter().map(|r| r.outcome).collect(),
        cluster_ids: data.records().iter().map(|r| r.unit).collect(),
        column_names: columns.into_iter().map(|c| c.name).collect(),
    })
}
