use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::did::ClusterLevel;
use crate::error::{DidError, Result};
use crate::linalg::Matrix;
use crate::panel::PanelDataset;
use crate::regress::quantile_sorted;
use crate::scalar::Scalar;

/// Largest tolerated share of inestimable replicates.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapPlan {
    pub replicates: usize,
    pub seed: u64,
    pub cluster_level: ClusterLevel,
    /// Percentile interval level: bounds at `alpha / 2` and `1 - alpha / 2`.
    pub alpha: f64,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self {
            replicates: 999,
            seed: 0,
            cluster_level: ClusterLevel::Unit,
            alpha: 0.05,
        }
    }
}

impl BootstrapPlan {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(DidError::InvalidConfig(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DidError::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult<T> {
    /// Surviving replicates (rows, in replicate order) × statistics.
    pub replicate_matrix: Matrix<T>,
    /// Statistic on the original data.
    pub point: Vec<T>,
    pub ci_low: Vec<T>,
    pub ci_high: Vec<T>,
    /// Replicate covariance with denominator `B - 1`.
    pub covariance: Matrix<T>,
    pub n_failed: usize,
    pub n_replicates: usize,
}

/// Cluster indices drawn with replacement for one replicate.
///
/// ChaCha20 keyed by `seed_from_u64(seed)` on stream `replicate`; the j-th
/// 64-bit output `x` selects cluster `floor(x · C / 2^64)`. Clusters are the
/// dataset's units in sorted-id order.
pub fn replicate_draws(seed: u64, replicate: u64, n_clusters: usize) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    (0..n_clusters)
        .map(|_| ((u128::from(rng.next_u64()) * n_clusters as u128) >> 64) as usize)
        .collect()
}

/// Nonparametric unit-level (pairs) bootstrap of a vector statistic.
///
/// Replicates whose statistic is inestimable (empty cells and the like) are
/// dropped and counted; more than [`MAX_FAILED_FRACTION`] of them is an
/// error. Resampled units keep their cohort labels: a copy of a unit carries
/// exactly the records its label was derived from.
pub fn cluster_bootstrap<T, F>(data: &PanelDataset<T>, plan: &BootstrapPlan, statistic: F) -> Result<BootstrapResult<T>>
where
    T: Scalar,
    F: Fn(&PanelDataset<T>) -> Result<Vec<T>> + Sync,
{
    plan.validate()?;
    let ClusterLevel::Unit = plan.cluster_level;
    let n_clusters = data.n_units();
    if n_clusters < 2 {
        return Err(DidError::TooFewClusters(n_clusters));
    }
    let point = statistic(data)?;
    let k = point.len();
    if k == 0 {
        return Err(DidError::EmptyInput("bootstrap statistic"));
    }

    let outcomes: Vec<Result<Option<Vec<T>>>> = (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            let draws = replicate_draws(plan.seed, r as u64, n_clusters);
            match statistic(&data.resample_units(&draws)) {
                Ok(v) if v.len() != k => Err(DidError::InvalidConfig(format!(
                    "statistic returned {} values on replicate {r}, expected {k}",
                    v.len()
                ))),
                Ok(v) if v.iter().all(|x| x.is_finite()) => Ok(Some(v)),
                Ok(_) => Ok(None),
                Err(e) if e.is_inestimable() => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(plan.replicates);
    let mut n_failed = 0;
    for o in outcomes {
        match o? {
            Some(v) => rows.push(v),
            None => n_failed += 1,
        }
    }
    if n_failed as f64 > MAX_FAILED_FRACTION * plan.replicates as f64 || rows.len() < 2 {
        return Err(DidError::BootstrapInstability {
            failed: n_failed,
            total: plan.replicates,
        });
    }
    if n_failed > 0 {
        log::debug!("{n_failed} of {} bootstrap replicates were inestimable and dropped", plan.replicates);
    }

    let replicate_matrix = Matrix::from_rows(&rows);
    let b = rows.len();
    let mut ci_low = Vec::with_capacity(k);
    let mut ci_high = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    for j in 0..k {
        let mut col = replicate_matrix.column(j);
        means.push(col.iter().copied().sum::<T>() / T::of_usize(b));
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite replicates"));
        ci_low.push(quantile_sorted(&col, plan.alpha / 2.0));
        ci_high.push(quantile_sorted(&col, 1.0 - plan.alpha / 2.0));
    }
    let mut covariance = Matrix::zeros(k, k);
    let denom = T::of_usize(b - 1);
    for i in 0..k {
        for j in i..k {
            let s: T = rows.iter().map(|r| (r[i] - means[i]) * (r[j] - means[j])).sum();
            covariance[(i, j)] = s / denom;
            covariance[(j, i)] = s / denom;
        }
    }
    Ok(BootstrapResult {
        replicate_matrix,
        point,
        ci_low,
        ci_high,
        covariance,
        n_failed,
        n_replicates: plan.replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen;
    use crate::panel::{GroupLabel, RecordInput};

    fn iid_panel(n: usize) -> PanelDataset<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let rows = (0..n)
            .map(|i| RecordInput {
                unit_id: format!("c{i:04}"),
                time: 1,
                outcome: (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0,
                treated: Some(false),
                group: Some(GroupLabel::NeverTreated),
                covariates: vec![],
            })
            .collect();
        PanelDataset::new(rows, vec![]).unwrap()
    }

    fn mean_outcome(d: &PanelDataset<f64>) -> Result<Vec<f64>> {
        let n = d.n_records() as f64;
        let m = d.records().iter().map(|r| r.outcome).sum::<f64>() / n;
        let m2 = d.records().iter().map(|r| r.outcome * r.outcome).sum::<f64>() / n;
        Ok(vec![m, m2])
    }

    #[test]
    fn draws_are_reproducible_and_in_range() {
        let a = replicate_draws(7, 3, 50);
        assert_eq!(a, replicate_draws(7, 3, 50));
        assert_ne!(a, replicate_draws(7, 4, 50));
        assert_ne!(a, replicate_draws(8, 3, 50));
        assert!(a.iter().all(|&i| i < 50));
    }

    #[test]
    fn constant_statistic_gives_zero_width_interval() {
        let d = iid_panel(20);
        let res = cluster_bootstrap(&d, &BootstrapPlan::new(50, 1), |_| Ok(vec![3.5])).unwrap();
        assert_eq!((res.ci_low[0], res.ci_high[0]), (3.5, 3.5));
        assert_eq!(res.covariance[(0, 0)], 0.0);
    }

    #[test]
    fn mean_se_matches_closed_form() {
        let d = iid_panel(200);
        let ys: Vec<f64> = d.records().iter().map(|r| r.outcome).collect();
        let m = ys.iter().sum::<f64>() / 200.0;
        let s = (ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / 199.0).sqrt();
        let analytic = s / 200f64.sqrt();
        let res = cluster_bootstrap(&d, &BootstrapPlan::new(999, 2024), mean_outcome).unwrap();
        let se = res.covariance[(0, 0)].sqrt();
        assert!((se / analytic - 1.0).abs() < 0.15, "bootstrap {se} vs analytic {analytic}");
        assert!(res.ci_low.iter().zip(&res.ci_high).all(|(l, h)| l <= h));
        assert!(res.covariance.max_abs_asymmetry() == 0.0);
        let (eig, _) = symmetric_eigen(&res.covariance);
        assert!(eig.iter().all(|&l| l > -1e-14));
    }

    #[test]
    fn thread_count_does_not_change_replicates() {
        let d = iid_panel(40);
        let plan = BootstrapPlan::new(64, 5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| cluster_bootstrap(&d, &plan, mean_outcome).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        // More replicates leave the point estimate alone.
        let more = cluster_bootstrap(&d, &BootstrapPlan::new(128, 5), mean_outcome).unwrap();
        assert_eq!(one.point, more.point);
    }

    #[test]
    fn order_preserving_relabel_gives_identical_draws() {
        let d = iid_panel(30);
        let relabeled = d.rename_units(|id| format!("z-{id}")).unwrap();
        let plan = BootstrapPlan::new(40, 11);
        let a = cluster_bootstrap(&d, &plan, mean_outcome).unwrap();
        let b = cluster_bootstrap(&relabeled, &plan, mean_outcome).unwrap();
        assert_eq!(a.replicate_matrix, b.replicate_matrix);
    }

    #[test]
    fn failures_are_counted_then_fatal() {
        let d = iid_panel(10);
        // Inestimable whenever the replicate misses cluster 0.
        let stat = |rep: &PanelDataset<f64>| {
            if rep.unit_ids().iter().any(|id| id == "c0000" || id.ends_with(":c0000")) {
                Ok(vec![1.0])
            } else {
                Err(DidError::EmptyCell {
                    predicate: "G = 1".into(),
                    time: 1,
                })
            }
        };
        let err = cluster_bootstrap(&d, &BootstrapPlan::new(200, 3), stat).unwrap_err();
        assert!(err.to_string().starts_with("bootstrap instability"), "{err}");
        assert!(matches!(
            cluster_bootstrap(&iid_panel(1), &BootstrapPlan::new(10, 3), mean_outcome),
            Err(DidError::TooFewClusters(1))
        ));
        assert!(cluster_bootstrap(&d, &BootstrapPlan::new(1, 3), mean_outcome).is_err());
    }
}
