use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CovValue, CovariateKind, CovariateSpec, GroupLabel, PanelDataset, RecordInput};
use crate::error::{DidError, Result};
use crate::scalar::Scalar;

/// Names the CSV columns holding each panel field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub unit: String,
    pub time: String,
    pub outcome: String,
    /// 0/1 treatment indicator column.
    pub treated: Option<String>,
    /// First-treated period column (integer or `never`).
    pub group: Option<String>,
    pub covariates: Vec<String>,
    /// Covariates to read as categorical even when their values parse as numbers.
    #[serde(default)]
    pub categorical: Vec<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            time: "time".into(),
            outcome: "outcome".into(),
            treated: Some("treated".into()),
            group: None,
            covariates: Vec::new(),
            categorical: Vec::new(),
        }
    }
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<PanelDataset<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DidError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, mapping)
}

pub fn read_csv<T: Scalar, R: Read>(reader: R, mapping: &ColumnMapping) -> Result<PanelDataset<T>> {
    if mapping.treated.is_none() && mapping.group.is_none() {
        return Err(DidError::InvalidConfig(
            "column mapping needs a treated column or a group column".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DidError::MissingColumn(name.to_string()))
    };
    let unit_col = col(&mapping.unit)?;
    let time_col = col(&mapping.time)?;
    let outcome_col = col(&mapping.outcome)?;
    let treated_col = mapping.treated.as_deref().map(col).transpose()?;
    let group_col = mapping.group.as_deref().map(col).transpose()?;
    let cov_cols = mapping
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    // Data rows are numbered from 2: row 1 is the header.
    let bad = |row: usize, column: &str, value: &str, expected: &'static str| DidError::BadValue {
        row: row + 2,
        column: column.to_string(),
        value: value.to_string(),
        expected,
    };

    let mut schema = Vec::with_capacity(cov_cols.len());
    for (name, &c) in mapping.covariates.iter().zip(&cov_cols) {
        for (i, row) in rows.iter().enumerate() {
            if row.get(c).unwrap_or("").is_empty() {
                return Err(bad(i, name, "", "a non-missing value"));
            }
        }
        let forced = mapping.categorical.iter().any(|n| n == name);
        let numeric = !forced && rows.iter().all(|r| r.get(c).unwrap_or("").parse::<f64>().is_ok());
        if numeric {
            schema.push(CovariateSpec::numeric(name.clone()));
        } else {
            let levels: BTreeSet<&str> = rows.iter().map(|r| r.get(c).unwrap_or("")).collect();
            schema.push(CovariateSpec::categorical(name.clone(), levels));
        }
    }

    let mut inputs = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let field = |c: usize| row.get(c).unwrap_or("");
        let unit_id = field(unit_col).to_string();
        if unit_id.is_empty() {
            return Err(bad(i, &mapping.unit, "", "a non-empty unit id"));
        }
        let time = field(time_col)
            .parse::<i64>()
            .map_err(|_| bad(i, &mapping.time, field(time_col), "an integer period"))?;
        let outcome = field(outcome_col)
            .parse::<f64>()
            .ok()
            .filter(|y| y.is_finite())
            .and_then(T::from_f64)
            .ok_or_else(|| bad(i, &mapping.outcome, field(outcome_col), "a finite number"))?;
        let treated = match treated_col {
            Some(c) => Some(match field(c) {
                "0" | "false" | "FALSE" | "False" => false,
                "1" | "true" | "TRUE" | "True" => true,
                v => return Err(bad(i, mapping.treated.as_deref().unwrap_or(""), v, "a 0/1 indicator")),
            }),
            None => None,
        };
        let group = match group_col {
            Some(c) => Some(
                field(c)
                    .parse::<GroupLabel>()
                    .map_err(|_| bad(i, mapping.group.as_deref().unwrap_or(""), field(c), "a period or `never`"))?,
            ),
            None => None,
        };
        let mut covariates = Vec::with_capacity(cov_cols.len());
        for (spec, &c) in schema.iter().zip(&cov_cols) {
            let v = field(c);
            covariates.push(match &spec.kind {
                CovariateKind::Numeric => CovValue::Num(
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .and_then(T::from_f64)
                        .ok_or_else(|| bad(i, &spec.name, v, "a finite number"))?,
                ),
                CovariateKind::Categorical(levels) => {
                    CovValue::Level(levels.iter().position(|l| l == v).expect("level collected above") as u32)
                }
            });
        }
        inputs.push(RecordInput {
            unit_id,
            time,
            outcome,
            treated,
            group,
            covariates,
        });
    }
    PanelDataset::new(inputs, schema)
}

/// Writes the canonical long format: `unit,time,outcome,treated,group,<covariates>`.
pub fn write_csv<T: Scalar>(data: &PanelDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| DidError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv_to(data, std::io::BufWriter::new(file))
}

pub fn write_csv_to<T: Scalar, W: Write>(data: &PanelDataset<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["unit", "time", "outcome", "treated", "group"];
    header.extend(data.schema().iter().map(|c| c.name.as_str()));
    w.write_record(&header)?;
    for (i, rec) in data.records().iter().enumerate() {
        let mut row = vec![
            data.unit_id(rec.unit).to_string(),
            rec.time.to_string(),
            rec.outcome.to_string(),
            u8::from(rec.treated).to_string(),
            data.group(rec.unit).to_string(),
        ];
        for (v, spec) in data.record_covariates(i).iter().zip(data.schema()) {
            row.push(match (v, &spec.kind) {
                (CovValue::Num(x), _) => x.to_string(),
                (CovValue::Level(l), CovariateKind::Categorical(levels)) => levels[*l as usize].clone(),
                (CovValue::Level(l), CovariateKind::Numeric) => l.to_string(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| DidError::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR_ROWS: &str = "unit,time,outcome,treated\n\
                             s1,2012,0.7,0\n\
                             s1,2013,0.8,0\n\
                             s1,2014,0.6,1\n\
                             s1,2015,0.65,1\n";

    #[test]
    fn four_row_csv_derives_group() {
        let d: PanelDataset<f64> = read_csv(FOUR_ROWS.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(d.group(0), GroupLabel::FirstTreatedAt(2014));
        assert_eq!(d.n_records(), 4);
    }

    #[test]
    fn reversal_reported() {
        let csv = "unit,time,outcome,treated\nx,1,0,0\nx,2,0,1\nx,3,0,0\n";
        let err = read_csv::<f64, _>(csv.as_bytes(), &ColumnMapping::default()).unwrap_err();
        assert!(err.to_string().contains("treatment reversal"));
        assert!(err.to_string().contains("`x`"));
    }

    #[test]
    fn missing_outcome_column_is_named() {
        let mapping = ColumnMapping {
            outcome: "retained".into(),
            ..ColumnMapping::default()
        };
        let err = read_csv::<f64, _>(FOUR_ROWS.as_bytes(), &mapping).unwrap_err();
        assert!(matches!(&err, DidError::MissingColumn(c) if c == "retained"));
        assert!(err.is_data_error());
    }

    #[test]
    fn non_numeric_outcome() {
        let csv = "unit,time,outcome,treated\nx,1,abc,0\n";
        let err = read_csv::<f64, _>(csv.as_bytes(), &ColumnMapping::default()).unwrap_err();
        assert!(matches!(err, DidError::BadValue { row: 2, .. }));
    }

    #[test]
    fn duplicate_unit_time() {
        let csv = "unit,time,outcome,treated\nx,1,0,0\nx,1,1,0\n";
        assert!(matches!(
            read_csv::<f64, _>(csv.as_bytes(), &ColumnMapping::default()),
            Err(DidError::DuplicateRecord { .. })
        ));
    }

    #[test]
    fn group_column_with_never_token() {
        let csv = "id,year,y,first\na,1,0,never\na,2,1,never\nb,1,0,2\nb,2,1,2\n";
        let mapping = ColumnMapping {
            unit: "id".into(),
            time: "year".into(),
            outcome: "y".into(),
            treated: None,
            group: Some("first".into()),
            ..ColumnMapping::default()
        };
        let d: PanelDataset<f64> = read_csv(csv.as_bytes(), &mapping).unwrap();
        assert_eq!(d.group(0), GroupLabel::NeverTreated);
        assert_eq!(d.group(1), GroupLabel::FirstTreatedAt(2));
        assert!(d.records()[3].treated);
    }

    #[test]
    fn covariate_kinds_and_missing_values() {
        let csv = "unit,time,outcome,treated,age,region\na,1,0,0,30.5,NE\nb,1,1,0,41,SO\n";
        let mapping = ColumnMapping {
            covariates: vec!["age".into(), "region".into()],
            ..ColumnMapping::default()
        };
        let d: PanelDataset<f64> = read_csv(csv.as_bytes(), &mapping).unwrap();
        assert_eq!(d.schema()[0].kind, CovariateKind::Numeric);
        assert_eq!(d.schema()[1].levels().unwrap(), &["NE".to_string(), "SO".to_string()]);

        let csv = "unit,time,outcome,treated,age\na,1,0,0,\n";
        let mapping = ColumnMapping {
            covariates: vec!["age".into()],
            ..ColumnMapping::default()
        };
        let err = read_csv::<f64, _>(csv.as_bytes(), &mapping).unwrap_err();
        assert!(err.to_string().contains("non-missing"));
    }
}
