//! Invariants checked over generated panels.

use proptest::prelude::*;

use didkit::did::{
    aggregate, att_2x2_means, att_2x2_regression, att_gt_all, pretrend_atts, CovariateMode, CovariateTerm,
    EstimatorConfig, EstimatorKind, PairSpec,
};
use didkit::inference::pretrend_wald_test;
use didkit::panel::{ControlRule, GroupLabel, PanelDataset};
use didkit::simgen::{generate_panel, CovariateDgp, CovariateDist, DgpConfig, EffectSpec, GroupShare};
use didkit::Matrix64;

fn panel(n: usize, seed: u64, delay: i64) -> PanelDataset<f64> {
    let mut c = DgpConfig::reference(n, seed);
    c.effect = EffectSpec::Constant { tau: 0.2 };
    c.max_entry_delay = delay;
    generate_panel(&c).unwrap().0
}

fn two_by_two(n: usize, seed: u64, share: f64, with_x: bool) -> PanelDataset<f64> {
    let c = DgpConfig {
        n_units: n,
        first_period: 1,
        last_period: 2,
        group_shares: vec![
            GroupShare {
                group: GroupLabel::FirstTreatedAt(2),
                share,
            },
            GroupShare {
                group: GroupLabel::NeverTreated,
                share: 1.0 - share,
            },
        ],
        covariates: if with_x {
            vec![CovariateDgp {
                name: "x".into(),
                dist: CovariateDist::Normal { mean: 1.0, sd: 2.0 },
                group_association: 1.0,
                level_effect: 0.3,
                trend_by_level: vec![],
                trend_slope: 0.0,
            }]
        } else {
            vec![]
        },
        time_effects: vec![],
        ..DgpConfig::reference(n, seed)
    };
    generate_panel(&c).unwrap().0
}

fn estimable(d: &PanelDataset<f64>) -> bool {
    let sizes = d.cohort_sizes();
    sizes.get(&2).copied().unwrap_or(0) >= 2 && d.n_units() - sizes.values().sum::<usize>() >= 2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn means_equal_saturated_regression(n in 8usize..300, seed in any::<u64>(), share in 0.2f64..0.8) {
        let d = two_by_two(n, seed, share, false);
        prop_assume!(estimable(&d));
        let pair = PairSpec::new(2, 2, 1, ControlRule::NeverTreated);
        let m = att_2x2_means(&d, &pair).unwrap().estimate;
        let r = att_2x2_regression(&d, &pair, &[], CovariateMode::None, 0.05).unwrap().estimate;
        prop_assert!((m - r).abs() < 1e-10, "means {m} vs regression {r}");
    }

    #[test]
    fn additive_time_constant_covariate_leaves_att_unchanged(n in 8usize..300, seed in any::<u64>(), share in 0.2f64..0.8) {
        let d = two_by_two(n, seed, share, true);
        prop_assume!(estimable(&d));
        let pair = PairSpec::new(2, 2, 1, ControlRule::NeverTreated);
        let plain = att_2x2_regression(&d, &pair, &[], CovariateMode::None, 0.05).unwrap().estimate;
        let adj = att_2x2_regression(&d, &pair, &[CovariateTerm::plain("x")], CovariateMode::Additive, 0.05)
            .unwrap()
            .estimate;
        prop_assert!((plain - adj).abs() < 1e-10);
    }

    #[test]
    fn shifting_periods_shifts_the_grid(seed in any::<u64>(), delta in -50i64..50) {
        let d = panel(120, seed, 0);
        let cfg = EstimatorConfig::default();
        let a = att_gt_all(&d, &cfg, true).unwrap();
        let b = att_gt_all(&d.shift_periods(delta), &cfg, true).unwrap();
        prop_assert_eq!(a.atts.len(), b.atts.len());
        for (x, y) in a.atts.iter().zip(&b.atts) {
            prop_assert_eq!((x.g + delta, x.t + delta, x.w), (y.g, y.t, y.w));
            prop_assert_eq!(x.estimate, y.estimate);
        }
    }

    #[test]
    fn unit_relabeling_leaves_the_grid_unchanged(seed in any::<u64>()) {
        let d = panel(100, seed, 1);
        let renamed = d.rename_units(|id| format!("site-{id}")).unwrap();
        let cfg = EstimatorConfig::default();
        let a = att_gt_all(&d, &cfg, false).unwrap();
        let b = att_gt_all(&renamed, &cfg, false).unwrap();
        for (x, y) in a.atts.iter().zip(&b.atts) {
            prop_assert!((x.estimate - y.estimate).abs() < 1e-12);
        }
    }

    #[test]
    fn outcome_shift_cancels_and_scale_carries_through(seed in any::<u64>(), c in -10.0f64..10.0, s in 0.1f64..10.0) {
        let d = panel(100, seed, 0);
        let cfg = EstimatorConfig::default();
        let base = att_gt_all(&d, &cfg, false).unwrap();
        let shifted = att_gt_all(&d.map_outcomes(|y| y + c), &cfg, false).unwrap();
        let scaled = att_gt_all(&d.map_outcomes(|y| y * s), &cfg, false).unwrap();
        for ((a, b), e) in base.atts.iter().zip(&shifted.atts).zip(&scaled.atts) {
            prop_assert!((a.estimate - b.estimate).abs() < 1e-9);
            prop_assert!((a.estimate * s - e.estimate).abs() < 1e-9 * s.max(1.0));
        }
    }

    #[test]
    fn aggregation_weights_sum_to_one_and_overall_is_post_mean(seed in any::<u64>(), delay in 0i64..3) {
        let d = panel(150, seed, delay);
        let grid = att_gt_all(&d, &EstimatorConfig::default(), false).unwrap();
        let agg = aggregate(&grid.atts, &grid.group_sizes).unwrap();
        for p in &agg.event_curve.points {
            let total: f64 = p.weights.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
        let post: Vec<f64> = agg.event_curve.points.iter().filter(|p| p.w >= 0).map(|p| p.estimate).collect();
        let mean = post.iter().sum::<f64>() / post.len() as f64;
        prop_assert!((agg.overall.unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn estimators_agree_without_covariates(seed in any::<u64>()) {
        let d = panel(150, seed, 0);
        let means = att_gt_all(&d, &EstimatorConfig::default(), false).unwrap();
        let reg = att_gt_all(
            &d,
            &EstimatorConfig { estimator: EstimatorKind::Regression, ..Default::default() },
            false,
        )
        .unwrap();
        for (a, b) in means.atts.iter().zip(&reg.atts) {
            prop_assert!((a.estimate - b.estimate).abs() < 1e-10);
        }
    }

    #[test]
    fn wald_statistic_is_nonnegative_with_valid_p(theta in prop::collection::vec(-1.0f64..1.0, 1..5), scale in 0.01f64..2.0) {
        let k = theta.len();
        let mut cov = Matrix64::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                cov[(i, j)] = scale * if i == j { 1.0 } else { 0.3 };
            }
        }
        let w = pretrend_wald_test(&theta, &cov).unwrap();
        prop_assert!(w.statistic >= 0.0);
        prop_assert!((0.0..=1.0).contains(&w.p_value));
        prop_assert_eq!(w.df, k);
    }
}

#[test]
fn placebo_grid_is_zero_without_noise_or_pretrend() {
    let mut c = DgpConfig::reference(200, 3);
    c.noise_sd = 0.0;
    c.effect = EffectSpec::Constant { tau: 0.4 };
    let (d, _) = generate_panel::<f64>(&c).unwrap();
    let pre = pretrend_atts(&d, &EstimatorConfig::default()).unwrap();
    assert_eq!(pre.atts.len(), 6);
    assert!(pre.atts.iter().all(|a| a.estimate.abs() < 1e-12));
}
