//! Synthetic staggered-adoption panels with known effects, and the Monte
//! Carlo harness that scores estimators against them.

mod config;
mod generate;
mod montecarlo;

pub use config::{
    CovariateDgp, CovariateDist, DgpConfig, EffectSpec, EventTimeEffect, GroupEffect, GroupEventEffect, GroupShare,
    LevelEffect, OutcomeKind, PeriodValue,
};
pub use generate::{generate_panel, TruthCell, TruthPoint, TruthTable};
pub use montecarlo::{
    monte_carlo_run, replicate_seed, McStatistic, McSummary, MonteCarloReport, MAX_MC_FAILED_FRACTION,
};
