use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{DidError, Result};
use crate::panel::GroupLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShare {
    pub group: GroupLabel,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodValue {
    pub period: i64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    #[default]
    Continuous,
    /// Bernoulli draws from the linear-probability mean clipped to [0.01, 0.99].
    Binary,
}

/// Distribution of a time-constant covariate among never-treated units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CovariateDist {
    /// Levels "0" and "1" with `P(1) = p`.
    Binary { p: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDgp {
    pub name: String,
    pub dist: CovariateDist,
    /// Shift for ever-treated units: added to `p` for binary covariates and
    /// to the mean in units of `sd` for normal ones. Zero gives balance.
    #[serde(default)]
    pub group_association: f64,
    /// Time-constant outcome shift per unit of the covariate.
    #[serde(default)]
    pub level_effect: f64,
    /// Binary only: outcome slope per period for levels "0" and "1".
    #[serde(default)]
    pub trend_by_level: Vec<f64>,
    /// Normal only: outcome slope per period per unit of the covariate.
    #[serde(default)]
    pub trend_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTimeEffect {
    pub w: i64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEffect {
    pub g: i64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEventEffect {
    pub g: i64,
    pub w: i64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEffect {
    pub level: String,
    pub tau: f64,
}

/// Treatment effect τ on treated records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EffectSpec {
    Constant { tau: f64 },
    ByEventTime { effects: Vec<EventTimeEffect> },
    ByGroup { effects: Vec<GroupEffect> },
    ByGroupAndEventTime { effects: Vec<GroupEventEffect> },
    /// Effect depending on the level of a binary covariate.
    ByCovariateLevel { name: String, effects: Vec<LevelEffect> },
}

impl Default for EffectSpec {
    fn default() -> Self {
        EffectSpec::Constant { tau: 0.0 }
    }
}

impl EffectSpec {
    /// τ for cohort `g` at event time `w`; `level` is the effect covariate's
    /// level for [`EffectSpec::ByCovariateLevel`].
    pub fn tau(&self, g: i64, w: i64, level: Option<&str>) -> Option<f64> {
        match self {
            EffectSpec::Constant { tau } => Some(*tau),
            EffectSpec::ByEventTime { effects } => effects.iter().find(|e| e.w == w).map(|e| e.tau),
            EffectSpec::ByGroup { effects } => effects.iter().find(|e| e.g == g).map(|e| e.tau),
            EffectSpec::ByGroupAndEventTime { effects } => {
                effects.iter().find(|e| e.g == g && e.w == w).map(|e| e.tau)
            }
            EffectSpec::ByCovariateLevel { effects, .. } => {
                let level = level?;
                effects.iter().find(|e| e.level == level).map(|e| e.tau)
            }
        }
    }

    fn taus(&self) -> Vec<f64> {
        match self {
            EffectSpec::Constant { tau } => vec![*tau],
            EffectSpec::ByEventTime { effects } => effects.iter().map(|e| e.tau).collect(),
            EffectSpec::ByGroup { effects } => effects.iter().map(|e| e.tau).collect(),
            EffectSpec::ByGroupAndEventTime { effects } => effects.iter().map(|e| e.tau).collect(),
            EffectSpec::ByCovariateLevel { effects, .. } => effects.iter().map(|e| e.tau).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n_units: usize,
    pub first_period: i64,
    pub last_period: i64,
    pub group_shares: Vec<GroupShare>,
    #[serde(default)]
    pub baseline: f64,
    #[serde(default)]
    pub unit_effect_sd: f64,
    /// Period effects λ_t; unlisted periods get 0.
    #[serde(default)]
    pub time_effects: Vec<PeriodValue>,
    #[serde(default)]
    pub covariates: Vec<CovariateDgp>,
    #[serde(default)]
    pub effect: EffectSpec,
    #[serde(default)]
    pub noise_sd: f64,
    /// Differential slope per period for ever-treated units, from the first
    /// period on. Zero means parallel trends hold.
    #[serde(default)]
    pub pretrend_slope: f64,
    #[serde(default)]
    pub outcome_kind: OutcomeKind,
    /// Each unit enters at a uniform period in `first ..= first + delay`.
    #[serde(default)]
    pub max_entry_delay: i64,
    #[serde(default)]
    pub seed: u64,
}

impl DgpConfig {
    /// Six periods 2012–2017, cohorts 2014/2015/2016 plus never-treated.
    pub fn reference(n_units: usize, seed: u64) -> Self {
        let shares = [
            (GroupLabel::FirstTreatedAt(2014), 0.3),
            (GroupLabel::FirstTreatedAt(2015), 0.2),
            (GroupLabel::FirstTreatedAt(2016), 0.2),
            (GroupLabel::NeverTreated, 0.3),
        ];
        Self {
            n_units,
            first_period: 2012,
            last_period: 2017,
            group_shares: shares.iter().map(|&(group, share)| GroupShare { group, share }).collect(),
            baseline: 0.0,
            unit_effect_sd: 1.0,
            time_effects: (2012..=2017)
                .map(|p| PeriodValue {
                    period: p,
                    value: 0.05 * (p - 2012) as f64,
                })
                .collect(),
            covariates: Vec::new(),
            effect: EffectSpec::default(),
            noise_sd: 0.5,
            pretrend_slope: 0.0,
            outcome_kind: OutcomeKind::Continuous,
            max_entry_delay: 0,
            seed,
        }
    }

    pub fn periods(&self) -> impl Iterator<Item = i64> {
        self.first_period..=self.last_period
    }

    pub fn time_effect(&self, t: i64) -> f64 {
        self.time_effects.iter().find(|p| p.period == t).map_or(0.0, |p| p.value)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DidError::InvalidConfig(msg));
        if self.n_units == 0 {
            return bad("n_units must be positive".into());
        }
        if self.last_period < self.first_period {
            return bad("last_period precedes first_period".into());
        }
        if self.group_shares.is_empty() {
            return bad("group_shares is empty".into());
        }
        let mut seen = BTreeSet::new();
        for s in &self.group_shares {
            if !(0.0..=1.0).contains(&s.share) {
                return bad(format!("share for group {} is outside [0, 1]", s.group));
            }
            if !seen.insert(s.group) {
                return bad(format!("group {} listed twice", s.group));
            }
        }
        let total: f64 = self.group_shares.iter().map(|s| s.share).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("group shares sum to {total}, expected 1"));
        }
        for (name, v) in [
            ("unit_effect_sd", self.unit_effect_sd),
            ("noise_sd", self.noise_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0"));
            }
        }
        if !self.pretrend_slope.is_finite() || !self.baseline.is_finite() {
            return bad("pretrend_slope and baseline must be finite".into());
        }
        if self.max_entry_delay < 0 || self.max_entry_delay > self.last_period - self.first_period {
            return bad("max_entry_delay must lie within the period range".into());
        }
        let mut names = BTreeSet::new();
        for c in &self.covariates {
            if !names.insert(c.name.as_str()) {
                return bad(format!("covariate `{}` listed twice", c.name));
            }
            match c.dist {
                CovariateDist::Binary { p } => {
                    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&(p + c.group_association)) {
                        return bad(format!("covariate `{}`: probabilities must lie in [0, 1]", c.name));
                    }
                    if !(c.trend_by_level.is_empty() || c.trend_by_level.len() == 2) {
                        return bad(format!("covariate `{}`: trend_by_level needs 2 entries", c.name));
                    }
                    if c.trend_slope != 0.0 {
                        return bad(format!("covariate `{}`: trend_slope applies to normal covariates", c.name));
                    }
                }
                CovariateDist::Normal { sd, .. } => {
                    if !(sd.is_finite() && sd >= 0.0) {
                        return bad(format!("covariate `{}`: sd must be >= 0", c.name));
                    }
                    if !c.trend_by_level.is_empty() {
                        return bad(format!("covariate `{}`: trend_by_level applies to binary covariates", c.name));
                    }
                }
            }
        }
        if self.effect.taus().iter().any(|t| !t.is_finite()) {
            return bad("treatment effects must be finite".into());
        }
        self.check_effect_coverage()
    }

    /// Every treated (g, w) in the period range must have an effect.
    fn check_effect_coverage(&self) -> Result<()> {
        let levels: Vec<Option<&str>> = match &self.effect {
            EffectSpec::ByCovariateLevel { name, .. } => {
                let Some(c) = self.covariates.iter().find(|c| &c.name == name) else {
                    return Err(DidError::UnknownCovariate(name.clone()));
                };
                if !matches!(c.dist, CovariateDist::Binary { .. }) {
                    return Err(DidError::NumericNotAllowed {
                        name: name.clone(),
                        context: "a level-specific effect",
                    });
                }
                vec![Some("0"), Some("1")]
            }
            _ => vec![None],
        };
        for s in &self.group_shares {
            let Some(g) = s.group.first_treated() else { continue };
            if s.share == 0.0 {
                continue;
            }
            for t in g.max(self.first_period)..=self.last_period {
                for &level in &levels {
                    if self.effect.tau(g, t - g, level).is_none() {
                        return Err(DidError::InvalidConfig(format!(
                            "effect undefined for cohort {g} at event time {}{}",
                            t - g,
                            level.map_or(String::new(), |l| format!(" level {l}"))
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
