//! Versioned JSON result documents and tidy CSV tables.
//!
//! Documents have a fixed key order (struct field order, sorted maps) and
//! every float is written with 17 significant digits, so identical results
//! serialize to identical bytes.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::did::{AggregationResult, Assumption, EstimatorKind, EventCurve, GroupTimeAtt, TwfeResult};
use crate::error::{DidError, Result};
use crate::inference::WaldTest;
use crate::panel::{ControlRule, GroupLabel};
use crate::pipeline::{BootstrapSummary, EstimationOutput, IntervalMethod, PretrendOutput};
use crate::scalar::Scalar;
use crate::simgen::MonteCarloReport;

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const LIBRARY_NAME: &str = env!("CARGO_PKG_NAME");
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryInfo {
    pub name: String,
    pub version: String,
}

impl Default for LibraryInfo {
    fn default() -> Self {
        Self {
            name: LIBRARY_NAME.into(),
            version: LIBRARY_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttRow {
    pub g: i64,
    pub t: i64,
    pub w: i64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_treated: usize,
    pub n_control: usize,
    pub control_rule: ControlRule,
    pub base_period: i64,
    pub estimator: EstimatorKind,
    pub assumptions: Vec<Assumption>,
}

impl AttRow {
    pub fn from_att<T: Scalar>(a: &GroupTimeAtt<T>) -> Self {
        Self {
            g: a.g,
            t: a.t,
            w: a.w,
            estimate: a.estimate.as_f64(),
            se: a.se.map(Scalar::as_f64),
            ci_low: a.ci.map(|c| c.0.as_f64()),
            ci_high: a.ci.map(|c| c.1.as_f64()),
            n_treated: a.n_treated,
            n_control: a.n_control,
            control_rule: a.control_rule,
            base_period: a.base_period,
            estimator: a.estimator,
            assumptions: a.assumptions.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub w: i64,
    pub estimate: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub groups: Vec<i64>,
    pub weights: Vec<f64>,
    pub partial: bool,
}

fn event_rows<T: Scalar>(curve: &EventCurve<T>) -> Vec<EventRow> {
    curve
        .points
        .iter()
        .map(|p| EventRow {
            w: p.w,
            estimate: p.estimate.as_f64(),
            ci_low: p.ci.map(|c| c.0.as_f64()),
            ci_high: p.ci.map(|c| c.1.as_f64()),
            groups: p.groups.clone(),
            weights: p.weights.iter().map(|w| w.as_f64()).collect(),
            partial: p.partial,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldDoc {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl<T: Scalar> From<&WaldTest<T>> for WaldDoc {
    fn from(w: &WaldTest<T>) -> Self {
        Self {
            statistic: w.statistic.as_f64(),
            df: w.df,
            p_value: w.p_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrendDoc {
    pub grid: Vec<AttRow>,
    pub event_curve: Vec<EventRow>,
    pub wald: Option<WaldDoc>,
}

impl PretrendDoc {
    pub fn from_output<T: Scalar>(p: &PretrendOutput<T>) -> Self {
        Self {
            grid: p.grid.atts.iter().map(AttRow::from_att).collect(),
            event_curve: event_rows(&p.curve),
            wald: p.wald.as_ref().map(WaldDoc::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumDoc {
    pub g: i64,
    pub t: i64,
    pub level: String,
    pub estimate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_treated: Option<usize>,
    pub skipped_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwfeDoc {
    pub coefficient: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub assumption: Assumption,
    pub caveat: String,
}

impl<T: Scalar> From<&TwfeResult<T>> for TwfeDoc {
    fn from(r: &TwfeResult<T>) -> Self {
        Self {
            coefficient: r.coefficient.as_f64(),
            se: r.se.map(Scalar::as_f64),
            ci_low: r.ci.map(|c| c.0.as_f64()),
            ci_high: r.ci.map(|c| c.1.as_f64()),
            n_obs: r.n_obs,
            n_clusters: r.n_clusters,
            assumption: r.assumption,
            caveat: r.caveat.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub pretrend: Option<PretrendDoc>,
    pub stratified: Vec<StratumDoc>,
    pub twfe: Option<TwfeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDoc {
    pub replicates: usize,
    pub n_failed: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl From<&BootstrapSummary> for BootstrapDoc {
    fn from(b: &BootstrapSummary) -> Self {
        Self {
            replicates: b.replicates,
            n_failed: b.n_failed,
            seed: b.seed,
            alpha: b.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDoc {
    pub g: i64,
    pub t: i64,
    pub reason: String,
}

/// Result document shared by every command that reports estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: String,
    pub library: LibraryInfo,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub interval_method: IntervalMethod,
    pub grid: Vec<AttRow>,
    pub skipped: Vec<SkippedDoc>,
    pub group_sizes: BTreeMap<String, usize>,
    pub group_weights: BTreeMap<String, f64>,
    pub event_curve: Vec<EventRow>,
    pub overall: Option<Estimate>,
    pub diagnostics: Diagnostics,
    pub bootstrap: Option<BootstrapDoc>,
    /// Summary of a `benchmark` run.
    pub monte_carlo: Option<MonteCarloReport>,
    pub warnings: Vec<String>,
}

impl ResultDocument {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            library: LibraryInfo::default(),
            command: command.into(),
            seed,
            config,
            interval_method: IntervalMethod::None,
            grid: Vec::new(),
            skipped: Vec::new(),
            group_sizes: BTreeMap::new(),
            group_weights: BTreeMap::new(),
            event_curve: Vec::new(),
            overall: None,
            diagnostics: Diagnostics::default(),
            bootstrap: None,
            monte_carlo: None,
            warnings: Vec::new(),
        }
    }

    /// Fills the cohort weights, event curve and overall estimate.
    pub fn set_aggregation<T: Scalar>(&mut self, agg: &AggregationResult<T>) {
        self.group_weights = agg.group_weights.iter().map(|(g, w)| (g.to_string(), w.as_f64())).collect();
        self.event_curve = event_rows(&agg.event_curve);
        self.overall = agg.overall.map(|o| Estimate {
            estimate: o.as_f64(),
            ci_low: agg.overall_ci.map(|c| c.0.as_f64()),
            ci_high: agg.overall_ci.map(|c| c.1.as_f64()),
        });
    }

    pub fn from_estimation<T: Scalar>(
        command: &str,
        seed: Option<u64>,
        config: serde_json::Value,
        out: &EstimationOutput<T>,
    ) -> Self {
        let mut doc = Self::new(command, seed, config);
        doc.interval_method = out.interval_method;
        doc.grid = out.grid.atts.iter().map(AttRow::from_att).collect();
        doc.skipped = out
            .grid
            .skipped
            .iter()
            .map(|s| SkippedDoc {
                g: s.g,
                t: s.t,
                reason: s.reason.clone(),
            })
            .collect();
        doc.group_sizes = out.grid.group_sizes.iter().map(|(g, n)| (g.to_string(), *n)).collect();
        doc.set_aggregation(&out.aggregation);
        doc.diagnostics.pretrend = out.pretrend.as_ref().map(PretrendDoc::from_output);
        for entry in &out.stratified {
            for (level, att) in &entry.result.by_level {
                doc.diagnostics.stratified.push(StratumDoc {
                    g: entry.g,
                    t: entry.t,
                    level: level.clone(),
                    estimate: Some(att.estimate.as_f64()),
                    ci_low: att.ci.map(|c| c.0.as_f64()),
                    ci_high: att.ci.map(|c| c.1.as_f64()),
                    n_treated: Some(att.n_treated),
                    skipped_reason: None,
                });
            }
            for (level, reason) in &entry.result.skipped {
                doc.diagnostics.stratified.push(StratumDoc {
                    g: entry.g,
                    t: entry.t,
                    level: level.clone(),
                    estimate: None,
                    ci_low: None,
                    ci_high: None,
                    n_treated: None,
                    skipped_reason: Some(reason.clone()),
                });
            }
        }
        doc.diagnostics.twfe = out.twfe.as_ref().map(TwfeDoc::from);
        doc.bootstrap = out.bootstrap.as_ref().map(BootstrapDoc::from);
        doc.warnings = out.warnings.clone();
        doc
    }
}

/// Wraps [`PrettyFormatter`] and writes floats with 17 significant digits.
pub struct FixedPrecisionFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for FixedPrecisionFormatter<'_> {
    fn default() -> Self {
        Self {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

/// `v` in scientific notation with 17 significant digits; exact for f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Formatter for FixedPrecisionFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes `value` deterministically, with a trailing newline.
pub fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedPrecisionFormatter::default());
    value
        .serialize(&mut ser)
        .map_err(|e| DidError::InvalidConfig(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per (g, w): `g,t,w,estimate,ci_low,ci_high,n_treated,n_control`.
pub fn write_grid_csv<W: Write>(rows: &[AttRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["g", "t", "w", "estimate", "ci_low", "ci_high", "n_treated", "n_control"])?;
    for r in rows {
        w.write_record([
            r.g.to_string(),
            r.t.to_string(),
            r.w.to_string(),
            r.estimate.to_string(),
            opt(r.ci_low),
            opt(r.ci_high),
            r.n_treated.to_string(),
            r.n_control.to_string(),
        ])?;
    }
    w.flush().map_err(|e| DidError::Io {
        path: "<grid csv>".into(),
        source: e,
    })
}

/// Event curve as `w,estimate,ci_low,ci_high,n_groups,partial`.
pub fn write_event_csv<W: Write>(rows: &[EventRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["w", "estimate", "ci_low", "ci_high", "n_groups", "partial"])?;
    for r in rows {
        w.write_record([
            r.w.to_string(),
            r.estimate.to_string(),
            opt(r.ci_low),
            opt(r.ci_high),
            r.groups.len().to_string(),
            r.partial.to_string(),
        ])?;
    }
    w.flush().map_err(|e| DidError::Io {
        path: "<event csv>".into(),
        source: e,
    })
}

/// Reads a grid table with at least `g`, `t` and `estimate` columns.
///
/// `w` is recomputed; a missing `base_period` defaults to `g - 1` for
/// post-treatment rows and `t - 1` for placebo rows.
pub fn read_grid_csv<R: io::Read>(reader: R) -> Result<Vec<GroupTimeAtt<f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| DidError::MissingColumn(name.to_string()));
    let (gi, ti, ei) = (need("g")?, need("t")?, need("estimate")?);
    let optional = [col("ci_low"), col("ci_high"), col("n_treated"), col("n_control"), col("base_period")];
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let parse_i64 = |i: usize, name: &str| -> Result<i64> {
            let v = field(i);
            v.parse().map_err(|_| DidError::BadValue {
                row: row + 2,
                column: name.into(),
                value: v,
                expected: "an integer",
            })
        };
        let parse_f64 = |i: usize, name: &str| -> Result<Option<f64>> {
            let v = field(i);
            if v.is_empty() {
                return Ok(None);
            }
            v.parse().map(Some).map_err(|_| DidError::BadValue {
                row: row + 2,
                column: name.into(),
                value: v,
                expected: "a number",
            })
        };
        let g = parse_i64(gi, "g")?;
        let t = parse_i64(ti, "t")?;
        let estimate = parse_f64(ei, "estimate")?.ok_or_else(|| DidError::BadValue {
            row: row + 2,
            column: "estimate".into(),
            value: String::new(),
            expected: "a number",
        })?;
        let ci = match (optional[0], optional[1]) {
            (Some(l), Some(h)) => match (parse_f64(l, "ci_low")?, parse_f64(h, "ci_high")?) {
                (Some(l), Some(h)) => Some((l, h)),
                _ => None,
            },
            _ => None,
        };
        let count = |i: Option<usize>, name: &str| -> Result<usize> {
            i.map_or(Ok(0), |i| Ok(parse_i64(i, name)?.max(0) as usize))
        };
        let base_period = match optional[4] {
            Some(i) => parse_i64(i, "base_period")?,
            None if t >= g => g - 1,
            None => t - 1,
        };
        out.push(GroupTimeAtt {
            g,
            t,
            w: t - g,
            estimate,
            se: None,
            ci,
            n_treated: count(optional[2], "n_treated")?,
            n_control: count(optional[3], "n_control")?,
            control_rule: ControlRule::default(),
            base_period,
            estimator: EstimatorKind::default(),
            assumptions: Vec::new(),
            warnings: Vec::new(),
        });
    }
    Ok(out)
}

/// Parses `2014:91,2015:8` into cohort sizes.
pub fn parse_group_sizes(s: &str) -> Result<BTreeMap<i64, usize>> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || DidError::InvalidConfig(format!("bad group size `{part}` (expected g:count)"));
        let (g, n) = part.split_once(':').ok_or_else(bad)?;
        let g: GroupLabel = g.trim().parse().map_err(|_| bad())?;
        let g = g.first_treated().ok_or_else(bad)?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if out.insert(g, n).is_some() {
            return Err(DidError::InvalidConfig(format!("group {g} listed twice")));
        }
    }
    if out.is_empty() {
        return Err(DidError::EmptyInput("group sizes"));
    }
    Ok(out)
}
