//! Long-format panel data with staggered, absorbing treatment.

mod cells;
mod csv_io;

pub use cells::{cell_mean, subset_2x2, ControlCohort, ControlRule, GroupPredicate};
pub(crate) use cells::subset_for;
pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to, ColumnMapping};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{DidError, Result};
use crate::scalar::Scalar;

/// Cohort membership: the first period a unit is treated, or never.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupLabel {
    FirstTreatedAt(i64),
    NeverTreated,
}

impl GroupLabel {
    pub fn first_treated(self) -> Option<i64> {
        match self {
            GroupLabel::FirstTreatedAt(g) => Some(g),
            GroupLabel::NeverTreated => None,
        }
    }

    /// Treatment indicator implied by the label at period `t`.
    pub fn treated_at(self, t: i64) -> bool {
        matches!(self, GroupLabel::FirstTreatedAt(g) if t >= g)
    }

    pub fn shifted(self, delta: i64) -> Self {
        match self {
            GroupLabel::FirstTreatedAt(g) => GroupLabel::FirstTreatedAt(g + delta),
            GroupLabel::NeverTreated => GroupLabel::NeverTreated,
        }
    }
}

impl Ord for GroupLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (GroupLabel::FirstTreatedAt(a), GroupLabel::FirstTreatedAt(b)) => a.cmp(b),
            (GroupLabel::FirstTreatedAt(_), GroupLabel::NeverTreated) => Ordering::Less,
            (GroupLabel::NeverTreated, GroupLabel::FirstTreatedAt(_)) => Ordering::Greater,
            (GroupLabel::NeverTreated, GroupLabel::NeverTreated) => Ordering::Equal,
        }
    }
}

impl PartialOrd for GroupLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::FirstTreatedAt(g) => write!(f, "{g}"),
            GroupLabel::NeverTreated => f.write_str("never"),
        }
    }
}

impl std::str::FromStr for GroupLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("never") {
            return Ok(GroupLabel::NeverTreated);
        }
        s.parse::<i64>()
            .map(GroupLabel::FirstTreatedAt)
            .map_err(|_| format!("`{s}` is neither an integer period nor `never`"))
    }
}

impl Serialize for GroupLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GroupLabel::FirstTreatedAt(g) => s.serialize_i64(*g),
            GroupLabel::NeverTreated => s.serialize_str("never"),
        }
    }
}

impl<'de> Deserialize<'de> for GroupLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(g) => Ok(GroupLabel::FirstTreatedAt(g)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CovariateKind {
    Numeric,
    /// Level names; the first level is the reference level for dummy coding.
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
}

impl CovariateSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Numeric,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Categorical(levels.into_iter().map(Into::into).collect()),
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            CovariateKind::Categorical(levels) => Some(levels),
            CovariateKind::Numeric => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovValue<T> {
    Num(T),
    /// Index into the schema's level list.
    Level(u32),
}

/// One (unit, period) observation. Covariates live in the owning dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelRecord<T> {
    /// Index into [`PanelDataset::unit_ids`].
    pub unit: usize,
    pub time: i64,
    pub outcome: T,
    pub treated: bool,
}

/// Unvalidated record as read from a file or produced by a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordInput<T> {
    pub unit_id: String,
    pub time: i64,
    pub outcome: T,
    pub treated: Option<bool>,
    pub group: Option<GroupLabel>,
    pub covariates: Vec<CovValue<T>>,
}

/// Validated long-format panel. Immutable once built.
///
/// Units are stored in sorted id order and records are sorted by
/// `(unit, time)`, so unit indices and record order are deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset<T> {
    unit_ids: Vec<String>,
    groups: Vec<GroupLabel>,
    records: Vec<PanelRecord<T>>,
    covariate_values: Vec<CovValue<T>>,
    unit_ranges: Vec<(usize, usize)>,
    periods: Vec<i64>,
    schema: Vec<CovariateSpec>,
}

impl<T: Scalar> PanelDataset<T> {
    /// Validates raw records and builds a dataset.
    ///
    /// Group labels come from the records' `group` field when present and are
    /// otherwise derived from the treatment path as the first treated period.
    pub fn new(mut inputs: Vec<RecordInput<T>>, schema: Vec<CovariateSpec>) -> Result<Self> {
        for rec in &inputs {
            validate_input(rec, &schema)?;
        }
        inputs.sort_by(|a, b| a.unit_id.cmp(&b.unit_id).then(a.time.cmp(&b.time)));

        let mut unit_ids = Vec::new();
        let mut groups = Vec::new();
        let mut records = Vec::with_capacity(inputs.len());
        let mut covariate_values = Vec::with_capacity(inputs.len() * schema.len());
        let mut unit_ranges = Vec::new();
        let mut periods = BTreeSet::new();

        let mut start = 0;
        while start < inputs.len() {
            let mut end = start + 1;
            while end < inputs.len() && inputs[end].unit_id == inputs[start].unit_id {
                end += 1;
            }
            let unit_recs = &inputs[start..end];
            for pair in unit_recs.windows(2) {
                if pair[0].time == pair[1].time {
                    return Err(DidError::DuplicateRecord {
                        unit: pair[0].unit_id.clone(),
                        time: pair[0].time,
                    });
                }
            }
            let label = resolve_group(unit_recs)?;
            let unit = unit_ids.len();
            let first_record = records.len();
            for rec in unit_recs {
                periods.insert(rec.time);
                records.push(PanelRecord {
                    unit,
                    time: rec.time,
                    outcome: rec.outcome,
                    treated: label.treated_at(rec.time),
                });
                covariate_values.extend_from_slice(&rec.covariates);
            }
            unit_ranges.push((first_record, records.len()));
            unit_ids.push(unit_recs[0].unit_id.clone());
            groups.push(label);
            start = end;
        }

        Ok(Self {
            unit_ids,
            groups,
            records,
            covariate_values,
            unit_ranges,
            periods: periods.into_iter().collect(),
            schema,
        })
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn unit_id(&self, unit: usize) -> &str {
        &self.unit_ids[unit]
    }

    pub fn group(&self, unit: usize) -> GroupLabel {
        self.groups[unit]
    }

    pub fn groups(&self) -> &[GroupLabel] {
        &self.groups
    }

    pub fn records(&self) -> &[PanelRecord<T>] {
        &self.records
    }

    /// Record index range belonging to `unit`.
    pub fn unit_record_range(&self, unit: usize) -> std::ops::Range<usize> {
        let (a, b) = self.unit_ranges[unit];
        a..b
    }

    pub fn record_covariates(&self, record: usize) -> &[CovValue<T>] {
        let k = self.schema.len();
        &self.covariate_values[record * k..(record + 1) * k]
    }

    /// Record of `unit` at period `time`, if observed.
    pub fn find_record(&self, unit: usize, time: i64) -> Option<usize> {
        let range = self.unit_record_range(unit);
        self.records[range.clone()]
            .binary_search_by_key(&time, |r| r.time)
            .ok()
            .map(|i| range.start + i)
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn first_period(&self) -> Option<i64> {
        self.periods.first().copied()
    }

    pub fn last_period(&self) -> Option<i64> {
        self.periods.last().copied()
    }

    pub fn schema(&self) -> &[CovariateSpec] {
        &self.schema
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| DidError::UnknownCovariate(name.to_string()))
    }

    /// Distinct group labels in ascending order (never-treated last).
    pub fn group_labels(&self) -> Vec<GroupLabel> {
        let set: BTreeSet<GroupLabel> = self.groups.iter().copied().collect();
        set.into_iter().collect()
    }

    /// First-treatment periods of all ever-treated cohorts, ascending.
    pub fn treated_groups(&self) -> Vec<i64> {
        self.group_labels().into_iter().filter_map(GroupLabel::first_treated).collect()
    }

    /// Treated-unit count per cohort, measured at the cohort's first treated
    /// period (units observed at that period).
    pub fn cohort_sizes(&self) -> BTreeMap<i64, usize> {
        let mut sizes = BTreeMap::new();
        for rec in &self.records {
            if let GroupLabel::FirstTreatedAt(g) = self.groups[rec.unit] {
                if rec.time == g {
                    *sizes.entry(g).or_insert(0) += 1;
                }
            }
        }
        sizes
    }

    /// Rebuilds group labels from the observed treatment paths.
    pub fn rederive_groups(&self) -> Result<Self> {
        let mut out = self.clone();
        for unit in 0..self.n_units() {
            let range = self.unit_record_range(unit);
            let recs = &self.records[range];
            out.groups[unit] = derive_from_path(&self.unit_ids[unit], recs.iter().map(|r| (r.time, r.treated)))?;
        }
        Ok(out)
    }

    /// Keeps records satisfying `keep`; units left without records vanish.
    /// Group labels are carried over unchanged.
    pub fn filter_records<F>(&self, keep: F) -> Self
    where
        F: Fn(&PanelRecord<T>, &[CovValue<T>], GroupLabel) -> bool,
    {
        let mut b = SubsetBuilder::new(self);
        for unit in 0..self.n_units() {
            let label = self.groups[unit];
            let range = self.unit_record_range(unit);
            let kept: Vec<usize> = range
                .filter(|&i| keep(&self.records[i], self.record_covariates(i), label))
                .collect();
            if !kept.is_empty() {
                b.push_unit(self.unit_ids[unit].clone(), label, &kept);
            }
        }
        b.finish()
    }

    /// Keeps only units observed at every listed period.
    pub fn balanced_on(&self, periods: &[i64]) -> Self {
        let mut b = SubsetBuilder::new(self);
        for unit in 0..self.n_units() {
            if periods.iter().all(|&t| self.find_record(unit, t).is_some()) {
                let range: Vec<usize> = self.unit_record_range(unit).collect();
                b.push_unit(self.unit_ids[unit].clone(), self.groups[unit], &range);
            }
        }
        b.finish()
    }

    /// Builds a cluster-bootstrap replicate: unit `k` of the result is a copy
    /// of unit `draws[k]` of `self` with all of its periods. Replicate ids are
    /// prefixed with the zero-padded draw position so they stay unique and in
    /// draw order.
    pub fn resample_units(&self, draws: &[usize]) -> Self {
        let width = draws.len().max(1).to_string().len();
        let mut b = SubsetBuilder::new(self);
        for (k, &unit) in draws.iter().enumerate() {
            let range: Vec<usize> = self.unit_record_range(unit).collect();
            b.push_unit(format!("{k:0width$}:{}", self.unit_ids[unit]), self.groups[unit], &range);
        }
        b.finish()
    }

    /// Shifts every period and every group label by `delta`.
    pub fn shift_periods(&self, delta: i64) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.time += delta;
        }
        for g in &mut out.groups {
            *g = g.shifted(delta);
        }
        for p in &mut out.periods {
            *p += delta;
        }
        out
    }

    /// Maps outcomes through `f`, keeping everything else.
    pub fn map_outcomes<F: Fn(T) -> T>(&self, f: F) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.outcome = f(r.outcome);
        }
        out
    }

    /// Renames units, keeping the sorted-id ordering contract by re-sorting.
    pub fn rename_units<F: Fn(&str) -> String>(&self, f: F) -> Result<Self> {
        Self::new(self.to_inputs_with(|id| f(id)), self.schema.clone())
    }

    /// Flattens back into raw records (with explicit group labels).
    pub fn to_inputs(&self) -> Vec<RecordInput<T>> {
        self.to_inputs_with(str::to_string)
    }

    fn to_inputs_with<F: Fn(&str) -> String>(&self, rename: F) -> Vec<RecordInput<T>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| RecordInput {
                unit_id: rename(&self.unit_ids[r.unit]),
                time: r.time,
                outcome: r.outcome,
                treated: Some(r.treated),
                group: Some(self.groups[r.unit]),
                covariates: self.record_covariates(i).to_vec(),
            })
            .collect()
    }
}

/// Builds a dataset from whole units of a parent dataset without revalidating.
struct SubsetBuilder<'a, T> {
    parent: &'a PanelDataset<T>,
    out: PanelDataset<T>,
    periods: BTreeSet<i64>,
}

impl<'a, T: Scalar> SubsetBuilder<'a, T> {
    fn new(parent: &'a PanelDataset<T>) -> Self {
        Self {
            parent,
            out: PanelDataset {
                unit_ids: Vec::new(),
                groups: Vec::new(),
                records: Vec::new(),
                covariate_values: Vec::new(),
                unit_ranges: Vec::new(),
                periods: Vec::new(),
                schema: parent.schema.clone(),
            },
            periods: BTreeSet::new(),
        }
    }

    fn push_unit(&mut self, id: String, label: GroupLabel, record_indices: &[usize]) {
        let unit = self.out.unit_ids.len();
        let start = self.out.records.len();
        for &i in record_indices {
            let mut rec = self.parent.records[i];
            rec.unit = unit;
            self.periods.insert(rec.time);
            self.out.records.push(rec);
            self.out
                .covariate_values
                .extend_from_slice(self.parent.record_covariates(i));
        }
        self.out.unit_ranges.push((start, self.out.records.len()));
        self.out.unit_ids.push(id);
        self.out.groups.push(label);
    }

    fn finish(mut self) -> PanelDataset<T> {
        self.out.periods = self.periods.into_iter().collect();
        self.out
    }
}

fn validate_input<T: Scalar>(rec: &RecordInput<T>, schema: &[CovariateSpec]) -> Result<()> {
    let invalid = |reason: String| DidError::InvalidRecord {
        unit: rec.unit_id.clone(),
        time: rec.time,
        reason,
    };
    if !rec.outcome.is_finite() {
        return Err(invalid("outcome is not finite".into()));
    }
    if rec.treated.is_none() && rec.group.is_none() {
        return Err(invalid("neither a treatment indicator nor a group label".into()));
    }
    if rec.covariates.len() != schema.len() {
        return Err(invalid(format!(
            "{} covariate values for a schema of {}",
            rec.covariates.len(),
            schema.len()
        )));
    }
    for (value, spec) in rec.covariates.iter().zip(schema) {
        match (value, &spec.kind) {
            (CovValue::Num(x), CovariateKind::Numeric) if x.is_finite() => {}
            (CovValue::Num(_), CovariateKind::Numeric) => {
                return Err(invalid(format!("covariate `{}` is not finite", spec.name)));
            }
            (CovValue::Level(l), CovariateKind::Categorical(levels)) if (*l as usize) < levels.len() => {}
            _ => {
                return Err(invalid(format!("covariate `{}` does not match its schema kind", spec.name)));
            }
        }
    }
    Ok(())
}

fn resolve_group<T>(recs: &[RecordInput<T>]) -> Result<GroupLabel> {
    let unit = &recs[0].unit_id;
    let explicit = recs.iter().find_map(|r| r.group);
    let label = match explicit {
        Some(label) => {
            for r in recs {
                match r.group {
                    Some(l) if l == label => {}
                    _ => {
                        return Err(DidError::InvalidRecord {
                            unit: unit.clone(),
                            time: r.time,
                            reason: format!("group label differs from `{label}` on other records"),
                        })
                    }
                }
            }
            label
        }
        None => derive_from_path(unit, recs.iter().map(|r| (r.time, r.treated.unwrap_or(false))))?,
    };
    for r in recs {
        if let Some(z) = r.treated {
            if z != label.treated_at(r.time) {
                if explicit.is_none() {
                    unreachable!("derived labels agree with their own path");
                }
                return Err(DidError::GroupMismatch {
                    unit: unit.clone(),
                    group: label.to_string(),
                    time: r.time,
                });
            }
        }
    }
    Ok(label)
}

/// `g = min{t : Z_t = 1}`, rejecting any return to `Z_t = 0` afterwards.
fn derive_from_path(unit: &str, path: impl Iterator<Item = (i64, bool)>) -> Result<GroupLabel> {
    let mut first_treated = None;
    for (t, z) in path {
        match (first_treated, z) {
            (None, true) => first_treated = Some(t),
            (Some(g), false) => {
                return Err(DidError::TreatmentReversal {
                    unit: unit.to_string(),
                    treated_at: g,
                    untreated_at: t,
                })
            }
            _ => {}
        }
    }
    Ok(first_treated.map_or(GroupLabel::NeverTreated, GroupLabel::FirstTreatedAt))
}
