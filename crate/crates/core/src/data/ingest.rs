//! Long-format CSV ingestion: one row per observation, header required.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::panel::{Covariate, CovariateKind, CovariateValue, Observation, PanelDataset, Series, TimeKey};
use crate::error::{EblrError, Result};

/// Series id used when the schema maps no column to the series role.
pub const DEFAULT_SERIES_ID: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindHint {
    Numeric,
    Binary,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(default)]
    pub kind: Option<KindHint>,
    /// Levels declared up front; levels observed in the file but not listed are appended.
    #[serde(default)]
    pub levels: Option<Vec<String>>,
}

impl CovariateSpec {
    pub fn inferred(name: impl Into<String>) -> Self {
        CovariateSpec { name: name.into(), kind: None, levels: None }
    }

    pub fn from_covariate(cov: &Covariate) -> Self {
        let (kind, levels) = match &cov.kind {
            CovariateKind::Numeric => (KindHint::Numeric, None),
            CovariateKind::Binary => (KindHint::Binary, None),
            CovariateKind::Categorical { levels } => (KindHint::Categorical, Some(levels.clone())),
        };
        CovariateSpec { name: cov.name.clone(), kind: Some(kind), levels }
    }
}

/// Maps CSV columns to roles. Usable directly as a JSON sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default)]
    pub series_id: Option<String>,
    pub timestamp: String,
    /// `None` loads a covariates-only file (future rows to forecast).
    #[serde(default)]
    pub target: Option<String>,
    /// `None` takes every column without another role, in header order.
    #[serde(default)]
    pub covariates: Option<Vec<CovariateSpec>>,
}

impl CsvSchema {
    pub fn new(timestamp: impl Into<String>, target: impl Into<String>) -> Self {
        CsvSchema { series_id: None, timestamp: timestamp.into(), target: Some(target.into()), covariates: None }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Ok(serde_json::from_reader(file)?)
    }
}

struct RawRow {
    line: usize,
    series: String,
    timestamp: TimeKey,
    target: f64,
    cells: Vec<String>,
}

pub fn load_panel_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PanelDataset> {
    let file = File::open(path.as_ref())?;
    read_panel_csv(file, schema)
}

pub fn read_panel_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EblrError::Schema(format!("column `{name}` not found in CSV header")))
    };

    let series_col = schema.series_id.as_deref().map(find).transpose()?;
    let time_col = find(&schema.timestamp)?;
    let target_col = schema.target.as_deref().map(find).transpose()?;

    let specs: Vec<CovariateSpec> = match &schema.covariates {
        Some(specs) => specs.clone(),
        None => {
            let taken: HashSet<usize> = [series_col, Some(time_col), target_col].into_iter().flatten().collect();
            headers
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken.contains(i))
                .map(|(_, h)| CovariateSpec::inferred(h.clone()))
                .collect()
        }
    };
    let cov_cols = specs.iter().map(|s| find(&s.name)).collect::<Result<Vec<_>>>()?;

    let mut raw = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |i: usize| record.get(i).unwrap_or("");
        let series = series_col.map(|i| cell(i).to_owned()).unwrap_or_else(|| DEFAULT_SERIES_ID.to_owned());
        let timestamp = TimeKey::parse(cell(time_col)).ok_or_else(|| EblrError::Parse {
            line,
            message: format!("unparseable timestamp `{}`", cell(time_col)),
        })?;
        let target = match target_col {
            Some(i) => {
                let text = cell(i);
                let y: f64 = text
                    .parse()
                    .map_err(|_| EblrError::Parse { line, message: format!("unparseable target `{text}`") })?;
                if !y.is_finite() {
                    return Err(EblrError::Parse { line, message: format!("non-finite target `{text}`") });
                }
                y
            }
            None => 0.0,
        };
        let cells = cov_cols.iter().map(|&i| cell(i).to_owned()).collect();
        raw.push(RawRow { line, series, timestamp, target, cells });
    }

    let covariates = specs
        .iter()
        .enumerate()
        .map(|(j, spec)| resolve_covariate(spec, raw.iter().map(|r| (r.line, r.cells[j].as_str()))))
        .collect::<Result<Vec<_>>>()?;

    let mut grouped: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    for row in raw {
        let values = covariates
            .iter()
            .zip(&row.cells)
            .map(|(cov, text)| encode_cell(cov, text, row.line))
            .collect::<Result<Vec<_>>>()?;
        grouped.entry(row.series).or_default().push(Observation {
            timestamp: row.timestamp,
            target: row.target,
            covariates: values,
        });
    }
    let series = grouped.into_iter().map(|(id, rows)| Series { id, rows }).collect();
    if target_col.is_some() {
        PanelDataset::new(covariates, series)
    } else {
        PanelDataset::without_targets(covariates, series)
    }
}

fn parse_number(text: &str) -> Option<f64> {
    text.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn resolve_covariate<'a>(spec: &CovariateSpec, cells: impl Iterator<Item = (usize, &'a str)> + Clone) -> Result<Covariate> {
    let kind = match spec.kind {
        Some(k) => k,
        None => {
            let numbers: Option<Vec<f64>> = cells.clone().map(|(_, t)| parse_number(t)).collect();
            match numbers {
                Some(xs) if !xs.is_empty() && xs.iter().all(|&x| x == 0.0 || x == 1.0) => KindHint::Binary,
                Some(_) => KindHint::Numeric,
                None => KindHint::Categorical,
            }
        }
    };
    let kind = match kind {
        KindHint::Numeric => CovariateKind::Numeric,
        KindHint::Binary => CovariateKind::Binary,
        KindHint::Categorical => {
            let mut levels = spec.levels.clone().unwrap_or_default();
            let known: HashSet<String> = levels.iter().cloned().collect();
            let mut extra: Vec<String> = cells
                .map(|(_, t)| t.to_owned())
                .filter(|t| !known.contains(t))
                .collect::<HashSet<_>>()
                .into_iter()
                .collect();
            if extra.iter().all(|t| parse_number(t).is_some()) {
                extra.sort_by(|a, b| parse_number(a).unwrap().total_cmp(&parse_number(b).unwrap()).then(a.cmp(b)));
            } else {
                extra.sort();
            }
            levels.extend(extra);
            CovariateKind::Categorical { levels }
        }
    };
    Ok(Covariate { name: spec.name.clone(), kind })
}

fn encode_cell(cov: &Covariate, text: &str, line: usize) -> Result<CovariateValue> {
    let bad = |what: &str| EblrError::Parse { line, message: format!("{what} `{text}` for covariate `{}`", cov.name) };
    match &cov.kind {
        CovariateKind::Numeric => parse_number(text).map(CovariateValue::Number).ok_or_else(|| bad("non-numeric value")),
        CovariateKind::Binary => match parse_number(text) {
            Some(x) if x == 0.0 || x == 1.0 => Ok(CovariateValue::Number(x)),
            _ => Err(bad("non-binary value")),
        },
        CovariateKind::Categorical { levels } => levels
            .iter()
            .position(|l| l == text)
            .map(|i| CovariateValue::Level(i as u32))
            .ok_or_else(|| bad("undeclared level")),
    }
}

/// Writes a dataset in the same long format `load_panel_csv` reads, with columns
/// `series_id,timestamp,target,<covariates...>`.
pub fn write_panel_csv<W: Write>(ds: &PanelDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["series_id".to_owned(), "timestamp".to_owned(), "target".to_owned()];
    header.extend(ds.schema().iter().map(|c| c.name.clone()));
    wtr.write_record(&header)?;
    for s in ds.series() {
        for row in &s.rows {
            let mut rec = vec![s.id.clone(), row.timestamp.to_string(), row.target.to_string()];
            for (cov, v) in ds.schema().iter().zip(&row.covariates) {
                rec.push(match (v, cov.levels()) {
                    (CovariateValue::Level(l), Some(levels)) => levels[*l as usize].clone(),
                    (CovariateValue::Number(x), _) => x.to_string(),
                    (CovariateValue::Level(l), None) => l.to_string(),
                });
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema {
            series_id: Some("store".into()),
            timestamp: "date".into(),
            target: Some("sales".into()),
            covariates: Some(vec![CovariateSpec::inferred("isWeekend"), CovariateSpec::inferred("isPromo")]),
        }
    }

    #[test]
    fn three_row_file() {
        let text = "store,date,sales,isWeekend,isPromo\n\
                    s1,2015-06-01,10.5,0,1\n\
                    s1,2015-06-02,11,0,0\n\
                    s1,2015-06-03,12,0,1\n";
        let ds = read_panel_csv(text.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.series().len(), 1);
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.schema().len(), 2);
        assert_eq!(ds.schema()[0].kind, CovariateKind::Binary);
        assert_eq!(ds.targets(), vec![10.5, 11.0, 12.0]);
    }

    #[test]
    fn out_of_order_rows_sorted() {
        let text = "store,date,sales,isWeekend,isPromo\n\
                    s1,2015-06-03,12,0,1\n\
                    s1,2015-06-01,10,0,1\n\
                    s1,2015-06-02,11,0,0\n";
        let ds = read_panel_csv(text.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.targets(), vec![10.0, 11.0, 12.0]);
    }

    #[test]
    fn nan_target_names_line() {
        let text = "store,date,sales,isWeekend,isPromo\n\
                    s1,2015-06-01,10,0,1\n\
                    s1,2015-06-02,NaN,0,0\n";
        match read_panel_csv(text.as_bytes(), &schema()) {
            Err(EblrError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "store,date,sales,isWeekend\ns1,2015-06-01,10,0\n";
        assert!(matches!(read_panel_csv(text.as_bytes(), &schema()), Err(EblrError::Schema(_))));
    }

    #[test]
    fn duplicate_key_is_integrity_error() {
        let text = "store,date,sales,isWeekend,isPromo\n\
                    s1,2015-06-01,10,0,1\n\
                    s1,2015-06-01,11,0,0\n";
        assert!(matches!(read_panel_csv(text.as_bytes(), &schema()), Err(EblrError::Integrity(_))));
    }

    #[test]
    fn categorical_inference_and_roundtrip() {
        let text = "t,y,color,temp\n1,1.5,red,10\n2,2.5,blue,12.5\n3,3.5,red,13\n";
        let ds = read_panel_csv(text.as_bytes(), &CsvSchema::new("t", "y")).unwrap();
        assert_eq!(ds.schema()[0], Covariate::categorical("color", ["blue", "red"]));
        assert_eq!(ds.schema()[1].kind, CovariateKind::Numeric);

        let mut buf = Vec::new();
        write_panel_csv(&ds, &mut buf).unwrap();
        let mut schema = CsvSchema::new("timestamp", "target");
        schema.series_id = Some("series_id".into());
        let back = read_panel_csv(buf.as_slice(), &schema).unwrap();
        assert_eq!(back.targets(), ds.targets());
        assert_eq!(back.schema(), ds.schema());
    }

    #[test]
    fn covariates_only_file() {
        let text = "t,isPromo\n1,0\n2,1\n";
        let schema = CsvSchema { series_id: None, timestamp: "t".into(), target: None, covariates: None };
        let ds = read_panel_csv(text.as_bytes(), &schema).unwrap();
        assert!(!ds.targets_known());
        assert_eq!(ds.series()[0].id, DEFAULT_SERIES_ID);
    }

    #[test]
    fn sidecar_json() {
        let json = r#"{"series_id":"store","timestamp":"date","target":"sales",
                       "covariates":[{"name":"isWeekend","kind":"binary"},{"name":"isPromo"}]}"#;
        let parsed: CsvSchema = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.covariates.as_ref().unwrap()[0].kind, Some(KindHint::Binary));
    }
}
