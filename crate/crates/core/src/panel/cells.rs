use std::fmt;

use serde::{Deserialize, Serialize};

use super::{GroupLabel, PanelDataset};
use crate::error::{DidError, Result};
use crate::scalar::Scalar;

/// Which units serve as the comparison cohort for ATT(g, t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlRule {
    /// Only units that are never treated.
    #[serde(rename = "never")]
    NeverTreated,
    /// Never-treated units plus units first treated after both compared
    /// periods (excluding cohort `g` itself).
    #[default]
    #[serde(rename = "notyet")]
    NotYetTreated,
    /// Units with `G > g`, regardless of whether they are treated by `t`.
    PaperLiteral,
}

impl ControlRule {
    pub fn name(self) -> &'static str {
        match self {
            ControlRule::NeverTreated => "never",
            ControlRule::NotYetTreated => "notyet",
            ControlRule::PaperLiteral => "paperliteral",
        }
    }
}

impl fmt::Display for ControlRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ControlRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "never" | "nevertreated" => Ok(ControlRule::NeverTreated),
            "notyet" | "notyettreated" => Ok(ControlRule::NotYetTreated),
            "paperliteral" | "literal" => Ok(ControlRule::PaperLiteral),
            other => Err(format!("unknown control rule `{other}` (expected never, notyet or paperliteral)")),
        }
    }
}

/// Comparison cohort for a specific (g, t, base) comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlCohort {
    pub rule: ControlRule,
    pub g: i64,
    pub t: i64,
    pub base: i64,
    pub anticipation: i64,
}

impl ControlCohort {
    pub fn contains(&self, label: GroupLabel) -> bool {
        match (self.rule, label) {
            (_, GroupLabel::NeverTreated) => true,
            (ControlRule::NeverTreated, GroupLabel::FirstTreatedAt(_)) => false,
            (ControlRule::NotYetTreated, GroupLabel::FirstTreatedAt(h)) => {
                h != self.g && h > self.t.max(self.base) + self.anticipation
            }
            (ControlRule::PaperLiteral, GroupLabel::FirstTreatedAt(h)) => h > self.g,
        }
    }
}

/// Selects the units entering a cell mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupPredicate {
    Group(GroupLabel),
    Control(ControlCohort),
}

impl GroupPredicate {
    pub fn matches(&self, label: GroupLabel) -> bool {
        match self {
            GroupPredicate::Group(l) => *l == label,
            GroupPredicate::Control(c) => c.contains(label),
        }
    }
}

impl fmt::Display for GroupPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupPredicate::Group(l) => write!(f, "G = {l}"),
            GroupPredicate::Control(c) => match c.rule {
                ControlRule::NeverTreated => f.write_str("G = never"),
                ControlRule::NotYetTreated => {
                    write!(f, "G > {} (G != {})", c.t.max(c.base) + c.anticipation, c.g)
                }
                ControlRule::PaperLiteral => write!(f, "G > {}", c.g),
            },
        }
    }
}

/// Mean outcome over records at `time` whose unit satisfies `predicate`.
pub fn cell_mean<T: Scalar>(data: &PanelDataset<T>, predicate: &GroupPredicate, time: i64) -> Result<T> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for rec in data.records() {
        if rec.time == time && predicate.matches(data.group(rec.unit)) {
            sum = sum + rec.outcome;
            n += 1;
        }
    }
    if n == 0 {
        return Err(DidError::EmptyCell {
            predicate: predicate.to_string(),
            time,
        });
    }
    Ok(sum / T::of_usize(n))
}

/// Restricts `data` to periods `{t_pre, t_post}` and to cohort `g` plus its
/// comparison cohort under `control`.
pub fn subset_2x2<T: Scalar>(
    data: &PanelDataset<T>,
    g: i64,
    t_pre: i64,
    t_post: i64,
    control: ControlRule,
) -> Result<PanelDataset<T>> {
    subset_for(
        data,
        &ControlCohort {
            rule: control,
            g,
            t: t_post,
            base: t_pre,
            anticipation: 0,
        },
    )
}

pub(crate) fn subset_for<T: Scalar>(data: &PanelDataset<T>, cohort: &ControlCohort) -> Result<PanelDataset<T>> {
    if cohort.base == cohort.t {
        return Err(DidError::InvalidConfig(format!(
            "comparison periods must differ (both {})",
            cohort.t
        )));
    }
    let treated = GroupLabel::FirstTreatedAt(cohort.g);
    let sub = data.filter_records(|rec, _, label| {
        (rec.time == cohort.t || rec.time == cohort.base) && (label == treated || cohort.contains(label))
    });
    if !sub.groups().iter().any(|&l| l == treated) {
        return Err(DidError::EmptyCohort {
            which: "treated",
            g: cohort.g,
        });
    }
    if !sub.groups().iter().any(|&l| cohort.contains(l)) {
        return Err(DidError::EmptyCohort {
            which: "control",
            g: cohort.g,
        });
    }
    Ok(sub)
}
