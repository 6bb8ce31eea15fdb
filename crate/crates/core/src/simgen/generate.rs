use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DidError, Result};
use crate::panel::{CovValue, CovariateSpec, GroupLabel, PanelDataset, RecordInput};
use crate::scalar::Scalar;
use crate::simgen::config::{CovariateDist, DgpConfig, EffectSpec, OutcomeKind};

/// Structural binary-outcome means beyond `[-TOL, 1 + TOL]` are infeasible.
const BINARY_MEAN_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCell {
    pub g: i64,
    pub t: i64,
    pub w: i64,
    /// Average effect over the cohort's units observed at `t`.
    pub att: f64,
    pub n_treated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub w: i64,
    pub att: f64,
}

/// Effects realized in one generated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    /// ATT(g, t) for every treated cohort and post period, ordered by (g, t).
    pub cells: Vec<TruthCell>,
    /// Cohort-size weighted event curve over cohorts with an observable base
    /// period.
    pub event_curve: Vec<TruthPoint>,
    /// Simple mean of the event curve over `w >= 0`.
    pub overall: Option<f64>,
    /// Units observed at each cohort's first treated period.
    pub group_sizes: BTreeMap<i64, usize>,
}

impl TruthTable {
    pub fn att(&self, g: i64, t: i64) -> Option<f64> {
        self.cells.iter().find(|c| c.g == g && c.t == t).map(|c| c.att)
    }

    pub fn event(&self, w: i64) -> Option<f64> {
        self.event_curve.iter().find(|p| p.w == w).map(|p| p.att)
    }
}

struct UnitDraw {
    group: GroupLabel,
    alpha: f64,
    entry: i64,
    covariates: Vec<f64>,
}

fn uniform(rng: &mut ChaCha20Rng) -> f64 {
    rng.random::<f64>()
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Stream used for unit `i`; stream 0 is left for configuration-level draws.
fn unit_rng(seed: u64, unit: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(unit as u64 + 1);
    rng
}

fn draw_unit(config: &DgpConfig, rng: &mut ChaCha20Rng) -> UnitDraw {
    let u = uniform(rng);
    let mut acc = 0.0;
    let mut group = config.group_shares.last().expect("validated").group;
    for s in &config.group_shares {
        acc += s.share;
        if u < acc {
            group = s.group;
            break;
        }
    }
    let alpha = config.unit_effect_sd * normal(rng);
    let entry = config.first_period + rng.random_range(0..=config.max_entry_delay);
    let ever = group != GroupLabel::NeverTreated;
    let covariates = config
        .covariates
        .iter()
        .map(|c| match c.dist {
            CovariateDist::Binary { p } => {
                let p = if ever { p + c.group_association } else { p };
                f64::from(uniform(rng) < p)
            }
            CovariateDist::Normal { mean, sd } => {
                let shift = if ever { c.group_association * sd } else { 0.0 };
                mean + shift + sd * normal(rng)
            }
        })
        .collect();
    UnitDraw {
        group,
        alpha,
        entry,
        covariates,
    }
}

fn effect_level(config: &DgpConfig, covariates: &[f64]) -> Option<&'static str> {
    let EffectSpec::ByCovariateLevel { name, .. } = &config.effect else {
        return None;
    };
    let idx = config.covariates.iter().position(|c| &c.name == name)?;
    Some(if covariates[idx] == 1.0 { "1" } else { "0" })
}

/// Outcome mean excluding the unit effect and noise.
fn structural_mean(config: &DgpConfig, group: GroupLabel, t: i64, covariates: &[f64]) -> f64 {
    let dt = (t - config.first_period) as f64;
    let mut m = config.baseline + config.time_effect(t);
    for (c, &x) in config.covariates.iter().zip(covariates) {
        m += c.level_effect * x;
        m += match c.dist {
            CovariateDist::Binary { .. } => c.trend_by_level.get(x as usize).copied().unwrap_or(0.0) * dt,
            CovariateDist::Normal { .. } => c.trend_slope * x * dt,
        };
    }
    if let Some(g) = group.first_treated() {
        m += config.pretrend_slope * dt;
        if t >= g {
            let level = effect_level(config, covariates);
            m += config.effect.tau(g, t - g, level).expect("coverage validated");
        }
    }
    m
}

fn check_binary_feasibility(config: &DgpConfig) -> Result<()> {
    // Binary covariates at both levels, normal covariates at their mean.
    let binary: Vec<usize> = config
        .covariates
        .iter()
        .enumerate()
        .filter(|(_, c)| matches!(c.dist, CovariateDist::Binary { .. }))
        .map(|(i, _)| i)
        .collect();
    let combos = 1usize << binary.len().min(16);
    let mut offending = Vec::new();
    for s in &config.group_shares {
        for t in config.periods() {
            for mask in 0..combos {
                let x: Vec<f64> = config
                    .covariates
                    .iter()
                    .enumerate()
                    .map(|(i, c)| match c.dist {
                        CovariateDist::Binary { .. } => {
                            let bit = binary.iter().position(|&b| b == i).expect("binary index");
                            f64::from((mask >> bit) & 1 == 1)
                        }
                        CovariateDist::Normal { mean, .. } => mean,
                    })
                    .collect();
                let m = structural_mean(config, s.group, t, &x);
                if !(-BINARY_MEAN_TOL..=1.0 + BINARY_MEAN_TOL).contains(&m) {
                    offending.push(format!("(group {}, period {t}, mean {m:.3})", s.group));
                }
            }
        }
    }
    if offending.is_empty() {
        return Ok(());
    }
    let shown = offending.len().min(5);
    Err(DidError::InfeasibleDgp(format!(
        "binary outcome mean outside [0, 1] in {} cells: {}{}",
        offending.len(),
        offending[..shown].join(", "),
        if offending.len() > shown { ", ..." } else { "" }
    )))
}

/// Draws a panel and the effects it realizes. Identical configs give
/// bit-identical panels: every unit draws from its own ChaCha20 stream.
pub fn generate_panel<T: Scalar>(config: &DgpConfig) -> Result<(PanelDataset<T>, TruthTable)> {
    config.validate()?;
    if config.outcome_kind == OutcomeKind::Binary {
        check_binary_feasibility(config)?;
    }
    let width = config.n_units.to_string().len().max(5);
    let schema: Vec<CovariateSpec> = config
        .covariates
        .iter()
        .map(|c| match c.dist {
            CovariateDist::Binary { .. } => CovariateSpec::categorical(c.name.clone(), ["0", "1"]),
            CovariateDist::Normal { .. } => CovariateSpec::numeric(c.name.clone()),
        })
        .collect();

    let mut rows = Vec::new();
    let mut effect_means: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
    for unit in 0..config.n_units {
        let mut rng = unit_rng(config.seed, unit);
        let draw = draw_unit(config, &mut rng);
        let covs: Vec<CovValue<T>> = config
            .covariates
            .iter()
            .zip(&draw.covariates)
            .map(|(c, &x)| match c.dist {
                CovariateDist::Binary { .. } => CovValue::Level(x as u32),
                CovariateDist::Normal { .. } => CovValue::Num(T::of(x)),
            })
            .collect();
        for t in draw.entry..=config.last_period {
            let mean = draw.alpha + structural_mean(config, draw.group, t, &draw.covariates);
            let y = match config.outcome_kind {
                OutcomeKind::Continuous => mean + config.noise_sd * normal(&mut rng),
                OutcomeKind::Binary => {
                    let p = mean.clamp(0.01, 0.99);
                    f64::from(uniform(&mut rng) < p)
                }
            };
            if let Some(g) = draw.group.first_treated() {
                if t >= g {
                    let level = effect_level(config, &draw.covariates);
                    // Running mean: exact when every unit shares one effect.
                    let tau = config.effect.tau(g, t - g, level).expect("coverage validated");
                    let e = effect_means.entry((g, t)).or_insert((0.0, 0));
                    e.1 += 1;
                    e.0 += (tau - e.0) / e.1 as f64;
                }
            }
            rows.push(RecordInput {
                unit_id: format!("u{:0width$}", unit + 1),
                time: t,
                outcome: T::of(y),
                treated: Some(draw.group.treated_at(t)),
                group: Some(draw.group),
                covariates: covs.clone(),
            });
        }
    }
    let data = PanelDataset::new(rows, schema)?;
    let truth = truth_table(config, &data, &effect_means);
    Ok((data, truth))
}

fn truth_table<T: Scalar>(
    config: &DgpConfig,
    data: &PanelDataset<T>,
    effect_means: &BTreeMap<(i64, i64), (f64, usize)>,
) -> TruthTable {
    let cells: Vec<TruthCell> = effect_means
        .iter()
        .map(|(&(g, t), &(mean, n))| TruthCell {
            g,
            t,
            w: t - g,
            att: mean,
            n_treated: n,
        })
        .collect();
    let group_sizes = data.cohort_sizes();
    // Cohorts whose base period g - 1 lies inside the observed range.
    let estimable = |g: i64| g > config.first_period && group_sizes.get(&g).is_some_and(|&n| n > 0);
    let mut by_w: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for c in cells.iter().filter(|c| estimable(c.g)) {
        let n = group_sizes[&c.g];
        let e = by_w.entry(c.w).or_insert((0.0, 0));
        e.0 += n as f64 * c.att;
        e.1 += n;
    }
    let event_curve: Vec<TruthPoint> = by_w
        .into_iter()
        .map(|(w, (s, n))| TruthPoint { w, att: s / n as f64 })
        .collect();
    let post: Vec<f64> = event_curve.iter().filter(|p| p.w >= 0).map(|p| p.att).collect();
    let overall = (!post.is_empty()).then(|| post.iter().sum::<f64>() / post.len() as f64);
    TruthTable {
        cells,
        event_curve,
        overall,
        group_sizes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::did::{att_2x2_means, PairSpec};
    use crate::panel::ControlRule;
    use crate::simgen::config::{CovariateDgp, EventTimeEffect};

    #[test]
    fn seed_determinism() {
        let c = DgpConfig::reference(300, 42);
        let (a, ta) = generate_panel::<f64>(&c).unwrap();
        let (b, tb) = generate_panel::<f64>(&c).unwrap();
        assert_eq!(a.to_inputs(), b.to_inputs());
        assert_eq!(ta, tb);
        let (d, _) = generate_panel::<f64>(&DgpConfig { seed: 43, ..c }).unwrap();
        assert_ne!(a.to_inputs(), d.to_inputs());
    }

    #[test]
    fn noiseless_null_panel_is_two_way_additive() {
        let mut c = DgpConfig::reference(60, 1);
        c.noise_sd = 0.0;
        let (d, _) = generate_panel::<f64>(&c).unwrap();
        for g in d.treated_groups() {
            for t in g..=2017 {
                let att = att_2x2_means(&d, &PairSpec::new(g, t, g - 1, ControlRule::NotYetTreated));
                if let Ok(att) = att {
                    assert!(att.estimate.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_effect_is_recovered_exactly_without_noise() {
        let mut c = DgpConfig::reference(80, 3);
        c.noise_sd = 0.0;
        c.effect = EffectSpec::Constant { tau: 0.05 };
        let (d, truth) = generate_panel::<f64>(&c).unwrap();
        for cell in &truth.cells {
            assert_eq!(cell.att, 0.05);
            let att = att_2x2_means(&d, &PairSpec::new(cell.g, cell.t, cell.g - 1, ControlRule::NeverTreated)).unwrap();
            assert!((att.estimate - 0.05).abs() < 1e-12);
        }
        assert!((truth.overall.unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn truth_overall_is_mean_of_event_curve() {
        let mut c = DgpConfig::reference(500, 9);
        c.effect = EffectSpec::ByEventTime {
            effects: [-0.13, -0.15, -0.22, -0.27]
                .iter()
                .enumerate()
                .map(|(w, &tau)| EventTimeEffect { w: w as i64, tau })
                .collect(),
        };
        let (_, truth) = generate_panel::<f64>(&c).unwrap();
        let ws: Vec<i64> = truth.event_curve.iter().map(|p| p.w).collect();
        assert_eq!(ws, vec![0, 1, 2, 3]);
        assert!((truth.event(2).unwrap() - (-0.22)).abs() < 1e-15);
        let mean = truth.event_curve.iter().map(|p| p.att).sum::<f64>() / 4.0;
        assert!((truth.overall.unwrap() - mean).abs() < 1e-15);
    }

    #[test]
    fn zero_association_balances_covariates() {
        let mut c = DgpConfig::reference(5000, 77);
        c.covariates = vec![CovariateDgp {
            name: "age".into(),
            dist: CovariateDist::Normal { mean: 40.0, sd: 10.0 },
            group_association: 0.0,
            level_effect: 0.0,
            trend_by_level: vec![],
            trend_slope: 0.0,
        }];
        let (d, _) = generate_panel::<f64>(&c).unwrap();
        let mut sums = [(0.0, 0.0, 0usize); 2];
        for unit in 0..d.n_units() {
            let r = d.unit_record_range(unit).start;
            let CovValue::Num(x) = d.record_covariates(r)[0] else { unreachable!() };
            let s = &mut sums[usize::from(d.group(unit) != GroupLabel::NeverTreated)];
            s.0 += x;
            s.1 += x * x;
            s.2 += 1;
        }
        let stats: Vec<(f64, f64)> = sums
            .iter()
            .map(|&(s, ss, n)| {
                let m = s / n as f64;
                (m, (ss / n as f64 - m * m) / n as f64)
            })
            .collect();
        let diff = stats[0].0 - stats[1].0;
        let se = (stats[0].1 + stats[1].1).sqrt();
        assert!(diff.abs() < 3.0 * se, "diff {diff}, se {se}");
    }

    #[test]
    fn entry_delay_unbalances_the_panel() {
        let mut c = DgpConfig::reference(200, 5);
        c.max_entry_delay = 2;
        let (d, _) = generate_panel::<f64>(&c).unwrap();
        assert!(d.n_records() < 200 * 6);
        assert!(d.n_records() >= 200 * 4);
    }

    #[test]
    fn infeasible_binary_outcome_is_rejected() {
        let mut c = DgpConfig::reference(10, 5);
        c.outcome_kind = OutcomeKind::Binary;
        c.unit_effect_sd = 0.0;
        c.time_effects.clear();
        c.baseline = 0.9;
        c.effect = EffectSpec::Constant { tau: 0.3 };
        let err = generate_panel::<f64>(&c).unwrap_err();
        assert!(matches!(err, DidError::InfeasibleDgp(_)));
        assert!(err.to_string().contains("group 2014"), "{err}");
        c.effect = EffectSpec::Constant { tau: -0.1 };
        let (d, _) = generate_panel::<f64>(&c).unwrap();
        assert!(d.records().iter().all(|r| r.outcome == 0.0 || r.outcome == 1.0));
    }

    #[test]
    fn f32_panels_match_f64_up_to_rounding() {
        let c = DgpConfig::reference(50, 8);
        let (a, _) = generate_panel::<f64>(&c).unwrap();
        let (b, _) = generate_panel::<f32>(&c).unwrap();
        for (x, y) in a.records().iter().zip(b.records()) {
            assert_eq!(x.outcome as f32, y.outcome);
        }
    }
}
