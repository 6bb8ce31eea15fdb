//! Command-line front end for `didkit`.
//!
//! Arguments are parsed into a [`RunConfig`], which is what the commands
//! execute and what every result document echoes back.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use didkit::did::{
    aggregate, att_gt_all, twfe_estimate, ClusterLevel, CovariateMode, CovariateTerm, EstimatorConfig, EstimatorKind,
};
use didkit::inference::BootstrapPlan;
use didkit::panel::{load_csv, write_csv, ColumnMapping, ControlRule, PanelDataset};
use didkit::pipeline::{run_estimation, run_pretest, EstimationRequest, IntervalMethod};
use didkit::report::{
    parse_group_sizes, read_grid_csv, to_json, write_event_csv, write_grid_csv, AttRow, BootstrapDoc, PretrendDoc,
    ResultDocument,
};
use didkit::simgen::{generate_panel, monte_carlo_run, DgpConfig, McStatistic, TruthTable};
use didkit::{DidError, Result};

/// Exit code for input and configuration problems.
pub const EXIT_DATA_ERROR: i32 = 1;
/// Exit code for estimation failures.
pub const EXIT_ESTIMATION_ERROR: i32 = 2;

pub fn exit_code(err: &DidError) -> i32 {
    if err.is_data_error() {
        EXIT_DATA_ERROR
    } else {
        EXIT_ESTIMATION_ERROR
    }
}

#[derive(Debug, Parser)]
#[command(name = "didkit", version, about = "Difference-in-differences for staggered adoption")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// More log output on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only errors on standard error.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Group-time ATTs, event-time and overall aggregation, intervals.
    Estimate(EstimateArgs),
    /// Aggregate an existing group-time grid CSV.
    Aggregate(AggregateArgs),
    /// Placebo estimates and the joint pre-trend Wald test.
    Pretest(PretestArgs),
    /// Generate a synthetic panel with known effects.
    Simulate(SimulateArgs),
    /// Monte Carlo bias, MCSE, RMSE and coverage against simulated truth.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Long-format panel CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "unit")]
    pub unit_col: String,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "outcome")]
    pub outcome_col: String,
    /// First-treated period column (integer or `never`).
    #[arg(long, conflicts_with = "treated_col")]
    pub group_col: Option<String>,
    /// 0/1 treatment indicator column (default `treated` without --group-col).
    #[arg(long)]
    pub treated_col: Option<String>,
    /// Covariate columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Covariates to read as categorical even if numeric.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
}

impl DataArgs {
    /// Column mapping; `stratify` is read as an extra categorical column.
    fn mapping_with(&self, stratify: Option<&str>) -> ColumnMapping {
        let mut m = self.mapping();
        if let Some(name) = stratify {
            if !m.covariates.iter().any(|c| c == name) {
                m.covariates.push(name.to_string());
            }
            if !m.categorical.iter().any(|c| c == name) {
                m.categorical.push(name.to_string());
            }
        }
        m
    }

    fn mapping(&self) -> ColumnMapping {
        let treated = match (&self.group_col, &self.treated_col) {
            (None, None) => Some("treated".to_string()),
            (_, t) => t.clone(),
        };
        ColumnMapping {
            unit: self.unit_col.clone(),
            time: self.time_col.clone(),
            outcome: self.outcome_col.clone(),
            treated,
            group: self.group_col.clone(),
            covariates: self.covariates.clone(),
            categorical: self.categorical.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    None,
    Additive,
    Interacted,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    #[arg(long, default_value = "means")]
    pub estimator: EstimatorKind,
    /// Comparison cohort: never, notyet or paperliteral.
    #[arg(long, default_value = "notyet")]
    pub control: ControlRule,
    /// How covariates enter the regression estimator.
    #[arg(long, value_enum, default_value = "interacted")]
    pub covariate_mode: ModeArg,
    /// Restricted cubic spline for a covariate, as `name:knots` (repeatable).
    #[arg(long, value_delimiter = ',')]
    pub spline: Vec<String>,
    /// Periods of anticipation before first treatment.
    #[arg(long, default_value_t = 0)]
    pub anticipation: i64,
    /// Smallest usable cell size.
    #[arg(long, default_value_t = 1)]
    pub min_cell: usize,
    /// Use only units observed in both periods of each comparison.
    #[arg(long)]
    pub require_balanced: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

impl EstimatorArgs {
    fn config(&self, covariates: &[String]) -> Result<EstimatorConfig> {
        let mut knots: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &self.spline {
            let (name, k) = s
                .split_once(':')
                .ok_or_else(|| DidError::InvalidConfig(format!("bad --spline `{s}` (expected name:knots)")))?;
            let k = k
                .parse()
                .map_err(|_| DidError::InvalidConfig(format!("bad knot count in --spline `{s}`")))?;
            knots.insert(name, k);
        }
        let mut terms: Vec<CovariateTerm> = covariates
            .iter()
            .map(|c| match knots.remove(c.as_str()) {
                Some(k) => CovariateTerm::spline(c.clone(), k),
                None => CovariateTerm::plain(c.clone()),
            })
            .collect();
        if let Some(name) = knots.keys().next() {
            return Err(DidError::InvalidConfig(format!(
                "--spline names `{name}`, which is not in --covariates"
            )));
        }
        if self.estimator == EstimatorKind::Means && !terms.is_empty() {
            log::info!("covariates are ignored by the means estimator");
            terms.clear();
        }
        let config = EstimatorConfig {
            estimator: self.estimator,
            covariates: terms,
            covariate_mode: match self.covariate_mode {
                ModeArg::None => CovariateMode::None,
                ModeArg::Additive => CovariateMode::Additive,
                ModeArg::Interacted => CovariateMode::InteractedWithTime,
            },
            control_rule: self.control,
            anticipation: self.anticipation,
            min_cell: self.min_cell,
            require_balanced: self.require_balanced,
            alpha: self.alpha,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SeedArgs {
    /// Random seed; falls back to DIDKIT_SEED, then 0.
    #[arg(long, env = "DIDKIT_SEED")]
    pub seed: Option<u64>,
}

impl SeedArgs {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file (standard output when absent).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Bootstrap replicates (0 disables the bootstrap).
    #[arg(long, default_value_t = 999)]
    pub reps: usize,
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Also report placebo estimates and the pre-trend Wald test.
    #[arg(long)]
    pub pretest: bool,
    /// Per-level ATTs for this categorical covariate.
    #[arg(long)]
    pub stratify: Option<String>,
    /// Also fit the static two-way fixed effects regression.
    #[arg(long)]
    pub twfe: bool,
    /// Write the event curve as CSV to this path.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    /// Grid CSV with at least g, t and estimate columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Cohort sizes as `g:n,...`; defaults to the largest n_treated per cohort.
    #[arg(long)]
    pub group_sizes: Option<String>,
    /// Write the event curve as CSV to this path.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PretestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long, default_value_t = 999)]
    pub reps: usize,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Generator config (TOML or JSON); the reference design when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Units for the reference design.
    #[arg(long, default_value_t = 1000)]
    pub n_units: usize,
    /// Overrides the config seed.
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Panel CSV path.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Truth file (default `truth.json` next to the panel).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    /// Generator config (TOML or JSON); the reference design when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n_units: usize,
    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 100)]
    pub mc_reps: usize,
    /// Bootstrap replicates per Monte Carlo replicate (0 skips intervals).
    #[arg(long, default_value_t = 0)]
    pub reps: usize,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Also benchmark the two-way fixed effects coefficient against the
    /// true overall effect.
    #[arg(long)]
    pub twfe: bool,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandName {
    Estimate,
    Aggregate,
    Pretest,
    Simulate,
    Benchmark,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Estimate => "estimate",
            CommandName::Aggregate => "aggregate",
            CommandName::Pretest => "pretest",
            CommandName::Simulate => "simulate",
            CommandName::Benchmark => "benchmark",
        }
    }
}

/// Fully resolved run settings, echoed in every result document.
///
/// The thread count is deliberately absent: it never changes results, and
/// leaving it out keeps documents byte-identical across settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandName,
    pub input: Option<PathBuf>,
    pub columns: Option<ColumnMapping>,
    pub estimator: Option<EstimatorConfig>,
    pub bootstrap: Option<BootstrapPlan>,
    pub pretest: bool,
    pub stratify: Option<String>,
    pub twfe: bool,
    pub group_sizes: Option<BTreeMap<i64, usize>>,
    pub dgp: Option<DgpConfig>,
    pub mc_reps: Option<usize>,
    pub output: Option<PathBuf>,
    pub truth_output: Option<PathBuf>,
    pub format: OutputFormat,
    pub emit_plot_data: Option<PathBuf>,
    pub verbosity: i8,
}

impl RunConfig {
    fn empty(command: CommandName, verbosity: i8) -> Self {
        Self {
            command,
            input: None,
            columns: None,
            estimator: None,
            bootstrap: None,
            pretest: false,
            stratify: None,
            twfe: false,
            group_sizes: None,
            dgp: None,
            mc_reps: None,
            output: None,
            truth_output: None,
            format: OutputFormat::Json,
            emit_plot_data: None,
            verbosity,
        }
    }

    /// Resolves parsed arguments, reading any generator config file.
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let verbosity = if cli.quiet { -1 } else { cli.verbose.min(3) as i8 };
        let bootstrap = |reps: usize, seed: &SeedArgs, alpha: f64| {
            (reps > 0).then(|| BootstrapPlan {
                alpha,
                ..BootstrapPlan::new(reps, seed.seed())
            })
        };
        Ok(match &cli.command {
            Command::Estimate(a) => Self {
                input: Some(a.data.input.clone()),
                columns: Some(a.data.mapping_with(a.stratify.as_deref())),
                estimator: Some(a.estimator.config(&a.data.covariates)?),
                bootstrap: bootstrap(a.reps, &a.seed, a.estimator.alpha),
                pretest: a.pretest,
                stratify: a.stratify.clone(),
                twfe: a.twfe,
                output: a.output.output.clone(),
                format: a.output.format,
                emit_plot_data: a.emit_plot_data.clone(),
                ..Self::empty(CommandName::Estimate, verbosity)
            },
            Command::Aggregate(a) => Self {
                input: Some(a.input.clone()),
                group_sizes: a.group_sizes.as_deref().map(parse_group_sizes).transpose()?,
                output: a.output.output.clone(),
                format: a.output.format,
                emit_plot_data: a.emit_plot_data.clone(),
                ..Self::empty(CommandName::Aggregate, verbosity)
            },
            Command::Pretest(a) => {
                if a.reps == 0 {
                    return Err(DidError::InvalidConfig("pretest needs --reps of at least 2".into()));
                }
                Self {
                    input: Some(a.data.input.clone()),
                    columns: Some(a.data.mapping()),
                    estimator: Some(a.estimator.config(&a.data.covariates)?),
                    bootstrap: bootstrap(a.reps, &a.seed, a.estimator.alpha),
                    pretest: true,
                    output: a.output.output.clone(),
                    format: a.output.format,
                    ..Self::empty(CommandName::Pretest, verbosity)
                }
            }
            Command::Simulate(a) => {
                let dgp = load_dgp(a.config.as_deref(), a.n_units, &a.seed)?;
                let truth = a.truth.clone().unwrap_or_else(|| a.output.with_file_name("truth.json"));
                Self {
                    dgp: Some(dgp),
                    output: Some(a.output.clone()),
                    truth_output: Some(truth),
                    format: OutputFormat::Csv,
                    ..Self::empty(CommandName::Simulate, verbosity)
                }
            }
            Command::Benchmark(a) => Self {
                dgp: Some(load_dgp(a.config.as_deref(), a.n_units, &a.seed)?),
                mc_reps: Some(a.mc_reps),
                estimator: Some(a.estimator.config(&[])?),
                bootstrap: bootstrap(a.reps, &a.seed, a.estimator.alpha),
                twfe: a.twfe,
                output: a.output.output.clone(),
                format: a.output.format,
                ..Self::empty(CommandName::Benchmark, verbosity)
            },
        })
    }

    /// Seed reported in the document: the bootstrap seed, else the generator's.
    pub fn seed(&self) -> Option<u64> {
        self.bootstrap.map(|b| b.seed).or(self.dgp.as_ref().map(|d| d.seed))
    }

    fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

fn load_dgp(path: Option<&Path>, n_units: usize, seed: &SeedArgs) -> Result<DgpConfig> {
    let mut config = match path {
        None => DgpConfig::reference(n_units, seed.seed()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| DidError::Io {
                path: p.display().to_string(),
                source,
            })?;
            let is_json = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            if is_json {
                serde_json::from_str(&text)
                    .map_err(|e| DidError::InvalidConfig(format!("{}: {e}", p.display())))?
            } else {
                toml::from_str(&text).map_err(|e| DidError::InvalidConfig(format!("{}: {e}", p.display())))?
            }
        }
    };
    if let Some(s) = seed.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn write_output(path: Option<&Path>, contents: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|source| DidError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents)
                .and_then(|()| out.flush())
                .map_err(|source| DidError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn grid_csv(rows: &[AttRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_grid_csv(rows, &mut buf)?;
    Ok(buf)
}

fn emit(config: &RunConfig, doc: &ResultDocument, csv_rows: &[AttRow]) -> Result<()> {
    for w in &doc.warnings {
        log::warn!("{w}");
    }
    if let Some(path) = &config.emit_plot_data {
        let mut buf = Vec::new();
        write_event_csv(&doc.event_curve, &mut buf)?;
        write_output(Some(path), &buf)?;
    }
    let bytes = match config.format {
        OutputFormat::Json => to_json(doc)?.into_bytes(),
        OutputFormat::Csv => grid_csv(csv_rows)?,
    };
    write_output(config.output.as_deref(), &bytes)
}

fn load_panel(config: &RunConfig) -> Result<PanelDataset<f64>> {
    let input = config.input.as_ref().expect("input resolved");
    let mapping = config.columns.as_ref().expect("columns resolved");
    load_csv(input, mapping)
}

/// Builds the result document of a run without writing anything.
pub fn execute(config: &RunConfig) -> Result<ResultDocument> {
    let mut doc = ResultDocument::new(config.command.as_str(), config.seed(), config.echo());
    match config.command {
        CommandName::Estimate => {
            let data = load_panel(config)?;
            let request = EstimationRequest {
                estimator: config.estimator.clone().expect("estimator resolved"),
                bootstrap: config.bootstrap,
                pretest: config.pretest,
                stratify: config.stratify.clone(),
                twfe: config.twfe,
            };
            let out = run_estimation(&data, &request)?;
            doc = ResultDocument::from_estimation(config.command.as_str(), config.seed(), config.echo(), &out);
        }
        CommandName::Aggregate => {
            let input = config.input.as_ref().expect("input resolved");
            let file = fs::File::open(input).map_err(|source| DidError::Io {
                path: input.display().to_string(),
                source,
            })?;
            let atts = read_grid_csv(file)?;
            let sizes = match &config.group_sizes {
                Some(s) => s.clone(),
                None => {
                    let mut sizes = BTreeMap::new();
                    for a in &atts {
                        let e = sizes.entry(a.g).or_insert(0);
                        *e = a.n_treated.max(*e);
                    }
                    sizes
                }
            };
            let agg = aggregate(&atts, &sizes)?;
            doc.grid = atts.iter().map(AttRow::from_att).collect();
            doc.group_sizes = sizes.iter().map(|(g, n)| (g.to_string(), *n)).collect();
            doc.set_aggregation(&agg);
            doc.interval_method = IntervalMethod::None;
            for p in agg.event_curve.points.iter().filter(|p| p.partial) {
                doc.warnings.push(format!("event time {} is only partially covered by cohorts", p.w));
            }
        }
        CommandName::Pretest => {
            let data = load_panel(config)?;
            let estimator = config.estimator.as_ref().expect("estimator resolved");
            let plan = config.bootstrap.expect("pretest bootstraps");
            let (pre, summary, warnings) = run_pretest(&data, estimator, &plan)?;
            doc.interval_method = IntervalMethod::PercentileBootstrap;
            doc.diagnostics.pretrend = Some(PretrendDoc::from_output(&pre));
            doc.bootstrap = Some(BootstrapDoc::from(&summary));
            doc.warnings = warnings;
        }
        CommandName::Benchmark => {
            let dgp = config.dgp.as_ref().expect("dgp resolved");
            let estimator = config.estimator.clone().expect("estimator resolved");
            let request = EstimationRequest {
                estimator,
                bootstrap: config.bootstrap,
                ..Default::default()
            };
            let twfe = config.twfe;
            let report = monte_carlo_run(dgp, config.mc_reps.unwrap_or(1), |data, truth, _| {
                benchmark_statistics(data, truth, &request, twfe)
            })?;
            doc.monte_carlo = Some(report);
        }
        CommandName::Simulate => {
            return Err(DidError::InvalidConfig("simulate writes a panel, not a result document".into()));
        }
    }
    Ok(doc)
}

fn benchmark_statistics(
    data: &PanelDataset<f64>,
    truth: &TruthTable,
    request: &EstimationRequest,
    twfe: bool,
) -> Result<Vec<McStatistic>> {
    let mut stats = Vec::new();
    if request.bootstrap.is_some() {
        let out = run_estimation(data, request)?;
        for a in &out.grid.atts {
            if let Some(t) = truth.att(a.g, a.t) {
                stats.push(McStatistic::new(format!("att({},{})", a.g, a.t), a.estimate, t).with_ci(a.ci));
            }
        }
        for p in &out.aggregation.event_curve.points {
            if let Some(t) = truth.event(p.w) {
                stats.push(McStatistic::new(format!("event({})", p.w), p.estimate, t).with_ci(p.ci));
            }
        }
        if let (Some(o), Some(t)) = (out.aggregation.overall, truth.overall) {
            stats.push(McStatistic::new("overall", o, t).with_ci(out.aggregation.overall_ci));
        }
    } else {
        let grid = att_gt_all(data, &request.estimator, false)?;
        let agg = aggregate(&grid.atts, &grid.group_sizes)?;
        for a in &grid.atts {
            if let Some(t) = truth.att(a.g, a.t) {
                stats.push(McStatistic::new(format!("att({},{})", a.g, a.t), a.estimate, t));
            }
        }
        for p in &agg.event_curve.points {
            if let Some(t) = truth.event(p.w) {
                stats.push(McStatistic::new(format!("event({})", p.w), p.estimate, t));
            }
        }
        if let (Some(o), Some(t)) = (agg.overall, truth.overall) {
            stats.push(McStatistic::new("overall", o, t));
        }
    }
    if twfe {
        if let Some(t) = truth.overall {
            let r = twfe_estimate(data, ClusterLevel::Unit, request.estimator.alpha)?;
            stats.push(McStatistic::new("twfe", r.coefficient, t).with_ci(r.ci));
        }
    }
    Ok(stats)
}

fn simulate(config: &RunConfig) -> Result<()> {
    let dgp = config.dgp.as_ref().expect("dgp resolved");
    let (data, truth) = generate_panel::<f64>(dgp)?;
    write_csv(&data, config.output.as_ref().expect("output resolved"))?;
    let truth_path = config.truth_output.as_deref().expect("truth path resolved");
    write_output(Some(truth_path), to_json(&truth)?.as_bytes())?;
    log::info!("wrote {} units over {} periods", data.n_units(), data.periods().len());
    Ok(())
}

/// Runs a resolved configuration and writes its outputs.
pub fn run(config: &RunConfig) -> Result<()> {
    if config.command == CommandName::Simulate {
        return simulate(config);
    }
    let doc = execute(config)?;
    let csv_rows = match (&doc.diagnostics.pretrend, config.command) {
        (Some(pre), CommandName::Pretest) => pre.grid.clone(),
        _ => doc.grid.clone(),
    };
    if config.format == OutputFormat::Csv && config.command == CommandName::Benchmark {
        return Err(DidError::InvalidConfig("benchmark output is JSON only".into()));
    }
    emit(config, &doc, &csv_rows)
}

/// Parses, resolves and runs; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_DATA_ERROR } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .parse_default_env()
        .try_init();

    let result = RunConfig::from_cli(&cli).and_then(|config| match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| DidError::InvalidConfig(format!("cannot start {n} threads: {e}")))?
            .install(|| run(&config)),
        None => run(&config),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
