use thiserror::Error;

pub type Result<T, E = DidError> = std::result::Result<T, E>;

/// Every failure the library reports.
///
/// Variants fall into two families: data problems (bad input files, broken
/// panel invariants) and estimation problems (empty cells, unidentified
/// coefficients, unstable resampling). [`DidError::is_data_error`] separates
/// them for exit-code mapping.
#[derive(Debug, Error)]
pub enum DidError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: column `{column}` value `{value}` is not {expected}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("unit `{unit}` at period {time}: {reason}")]
    InvalidRecord {
        unit: String,
        time: i64,
        reason: String,
    },
    #[error("duplicate record for unit `{unit}` at period {time}")]
    DuplicateRecord { unit: String, time: i64 },
    #[error("treatment reversal for unit `{unit}`: treated at {treated_at}, untreated at {untreated_at}")]
    TreatmentReversal {
        unit: String,
        treated_at: i64,
        untreated_at: i64,
    },
    #[error("unit `{unit}`: group label {group} disagrees with treatment indicator at period {time}")]
    GroupMismatch {
        unit: String,
        group: String,
        time: i64,
    },
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("covariate `{name}` is categorical; {context} requires a numeric covariate")]
    CategoricalNotAllowed { name: String, context: &'static str },
    #[error("covariate `{name}` is numeric; {context} requires a categorical covariate")]
    NumericNotAllowed { name: String, context: &'static str },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty cell: no records for {predicate} at period {time}")]
    EmptyCell { predicate: String, time: i64 },
    #[error("cell {predicate} at period {time} has {count} records, below min_cell {min_cell}")]
    SmallCell {
        predicate: String,
        time: i64,
        count: usize,
        min_cell: usize,
    },
    #[error("empty {which} cohort for group {g}")]
    EmptyCohort { which: &'static str, g: i64 },
    #[error("invalid matrix input: {0}")]
    InvalidMatrix(String),
    #[error("coefficient `{0}` is not identified: column is collinear with earlier design columns")]
    Unidentified(String),
    #[error("control design is rank deficient; dropped columns: {0}")]
    RankDeficient(String),
    #[error("common support violated: covariate `{covariate}` level `{level}` occurs among treated units but not among controls at period {time}")]
    SupportViolation {
        covariate: String,
        level: String,
        time: i64,
    },
    #[error("no estimable group-time pairs: {0}")]
    NoEstimablePairs(String),
    #[error("no pre-periods available")]
    NoPrePeriods,
    #[error("need at least two clusters, found {0}")]
    TooFewClusters(usize),
    #[error("cluster id vector has length {got}, expected {expected}")]
    ClusterLengthMismatch { expected: usize, got: usize },
    #[error("no residual degrees of freedom (n = {n}, rank = {rank})")]
    NoResidualDf { n: usize, rank: usize },
    #[error("bootstrap instability: {failed} of {total} replicates failed")]
    BootstrapInstability { failed: usize, total: usize },
    #[error("too many failed Monte Carlo replicates: {failed} of {total}")]
    MonteCarloFailure { failed: usize, total: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("infeasible simulation config: {0}")]
    InfeasibleDgp(String),
}

impl DidError {
    /// True for errors caused by the input data rather than by estimation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            DidError::Io { .. }
                | DidError::Csv(_)
                | DidError::MissingColumn(_)
                | DidError::BadValue { .. }
                | DidError::InvalidRecord { .. }
                | DidError::DuplicateRecord { .. }
                | DidError::TreatmentReversal { .. }
                | DidError::GroupMismatch { .. }
                | DidError::UnknownCovariate(_)
                | DidError::CategoricalNotAllowed { .. }
                | DidError::NumericNotAllowed { .. }
                | DidError::InvalidConfig(_)
        )
    }

    /// True when a bootstrap or Monte Carlo replicate may be discarded
    /// instead of aborting the whole run.
    pub fn is_inestimable(&self) -> bool {
        matches!(
            self,
            DidError::EmptyCell { .. }
                | DidError::SmallCell { .. }
                | DidError::EmptyCohort { .. }
                | DidError::Unidentified(_)
                | DidError::RankDeficient(_)
                | DidError::SupportViolation { .. }
                | DidError::NoEstimablePairs(_)
                | DidError::NoPrePeriods
                | DidError::NoResidualDf { .. }
                | DidError::InvalidMatrix(_)
                | DidError::DegenerateCovariance(_)
        )
    }
}
