use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DidError, Result};
use crate::panel::PanelDataset;
use crate::simgen::config::DgpConfig;
use crate::simgen::generate::{generate_panel, TruthTable};

/// Largest tolerated share of failed replicates.
pub const MAX_MC_FAILED_FRACTION: f64 = 0.2;

/// One statistic from one replicate, paired with its true value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStatistic {
    pub name: String,
    pub estimate: f64,
    pub truth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
}

impl McStatistic {
    pub fn new(name: impl Into<String>, estimate: f64, truth: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            truth,
            ci: None,
        }
    }

    pub fn with_ci(mut self, ci: Option<(f64, f64)>) -> Self {
        self.ci = ci;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub name: String,
    /// Replicates that produced this statistic.
    pub n: usize,
    pub mean_estimate: f64,
    pub mean_truth: f64,
    /// Mean of `estimate - truth`.
    pub bias: f64,
    /// `sd(estimate - truth) / sqrt(n)`; absent with a single replicate.
    pub mcse: Option<f64>,
    pub sd: Option<f64>,
    pub rmse: f64,
    /// Share of intervals containing the truth, when intervals were given.
    pub coverage: Option<f64>,
    pub variance_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub seed: u64,
    pub n_reps: usize,
    pub n_failed: usize,
    pub failures: Vec<String>,
    pub statistics: Vec<McSummary>,
}

impl MonteCarloReport {
    pub fn get(&self, name: &str) -> Option<&McSummary> {
        self.statistics.iter().find(|s| s.name == name)
    }
}

/// Panel seed for replicate `rep`: first output of ChaCha20 keyed by the
/// config seed on stream `rep`.
pub fn replicate_seed(seed: u64, rep: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

/// Repeats generate-then-estimate `n_reps` times and summarizes each named
/// statistic against the truth. Inestimable replicates are counted as
/// failures; more than [`MAX_MC_FAILED_FRACTION`] of them is an error.
pub fn monte_carlo_run<F>(config: &DgpConfig, n_reps: usize, pipeline: F) -> Result<MonteCarloReport>
where
    F: Fn(&PanelDataset<f64>, &TruthTable, usize) -> Result<Vec<McStatistic>> + Sync,
{
    if n_reps == 0 {
        return Err(DidError::InvalidConfig("n_reps must be at least 1".into()));
    }
    config.validate()?;
    let outcomes: Vec<Result<std::result::Result<Vec<McStatistic>, String>>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let cfg = DgpConfig {
                seed: replicate_seed(config.seed, rep),
                ..config.clone()
            };
            let (data, truth) = generate_panel::<f64>(&cfg)?;
            match pipeline(&data, &truth, rep) {
                Ok(stats) => Ok(Ok(stats)),
                Err(e) if e.is_inestimable() || matches!(e, DidError::BootstrapInstability { .. }) => {
                    Ok(Err(format!("replicate {rep}: {e}")))
                }
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut names: Vec<String> = Vec::new();
    let mut values: Vec<Vec<McStatistic>> = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o? {
            Ok(stats) => {
                for s in stats {
                    let idx = match names.iter().position(|n| *n == s.name) {
                        Some(i) => i,
                        None => {
                            names.push(s.name.clone());
                            values.push(Vec::new());
                            names.len() - 1
                        }
                    };
                    values[idx].push(s);
                }
            }
            Err(reason) => failures.push(reason),
        }
    }
    if failures.len() as f64 > MAX_MC_FAILED_FRACTION * n_reps as f64 {
        return Err(DidError::MonteCarloFailure {
            failed: failures.len(),
            total: n_reps,
        });
    }
    let statistics = names.into_iter().zip(values).map(|(n, v)| summarize(n, &v)).collect();
    Ok(MonteCarloReport {
        seed: config.seed,
        n_reps,
        n_failed: failures.len(),
        failures,
        statistics,
    })
}

fn summarize(name: String, values: &[McStatistic]) -> McSummary {
    let n = values.len();
    let nf = n as f64;
    let errors: Vec<f64> = values.iter().map(|s| s.estimate - s.truth).collect();
    let bias = errors.iter().sum::<f64>() / nf;
    let variance_defined = n >= 2;
    let sd = variance_defined.then(|| (errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt());
    let with_ci: Vec<&McStatistic> = values.iter().filter(|s| s.ci.is_some()).collect();
    let coverage = (!with_ci.is_empty()).then(|| {
        let hits = with_ci
            .iter()
            .filter(|s| {
                let (lo, hi) = s.ci.expect("filtered");
                lo <= s.truth && s.truth <= hi
            })
            .count();
        hits as f64 / with_ci.len() as f64
    });
    McSummary {
        name,
        n,
        mean_estimate: values.iter().map(|s| s.estimate).sum::<f64>() / nf,
        mean_truth: values.iter().map(|s| s.truth).sum::<f64>() / nf,
        bias,
        mcse: sd.map(|s| s / nf.sqrt()),
        sd,
        rmse: (errors.iter().map(|e| e * e).sum::<f64>() / nf).sqrt(),
        coverage,
        variance_defined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::did::{att_2x2_means, PairSpec};
    use crate::panel::ControlRule;
    use crate::simgen::config::EffectSpec;

    fn pipeline(d: &PanelDataset<f64>, truth: &TruthTable, _: usize) -> Result<Vec<McStatistic>> {
        let att = att_2x2_means(d, &PairSpec::new(2014, 2014, 2013, ControlRule::NotYetTreated))?;
        let t = truth.att(2014, 2014).expect("cohort present");
        Ok(vec![McStatistic::new("att_2014_2014", att.estimate, t)
            .with_ci(Some((att.estimate - 0.2, att.estimate + 0.2)))])
    }

    #[test]
    fn unbiased_estimator_has_small_bias_and_is_deterministic() {
        let mut c = DgpConfig::reference(400, 12);
        c.effect = EffectSpec::Constant { tau: 0.1 };
        let a = monte_carlo_run(&c, 40, pipeline).unwrap();
        let s = a.get("att_2014_2014").unwrap();
        assert_eq!(s.n, 40);
        assert!(s.bias.abs() < 3.0 * s.mcse.unwrap());
        assert!(s.coverage.is_some());
        let b = monte_carlo_run(&c, 40, pipeline).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_replicate_flags_undefined_variance() {
        let c = DgpConfig::reference(100, 1);
        let r = monte_carlo_run(&c, 1, pipeline).unwrap();
        let s = &r.statistics[0];
        assert!(!s.variance_defined);
        assert_eq!(s.mcse, None);
        assert_eq!(s.n, 1);
        assert_eq!(s.rmse, s.bias.abs());
    }

    #[test]
    fn too_many_failures() {
        let c = DgpConfig::reference(50, 1);
        let err = monte_carlo_run(&c, 10, |_, _, rep| {
            if rep % 2 == 0 {
                Err(DidError::NoPrePeriods)
            } else {
                Ok(vec![McStatistic::new("x", 0.0, 0.0)])
            }
        })
        .unwrap_err();
        assert!(matches!(err, DidError::MonteCarloFailure { failed: 5, total: 10 }));
    }
}
