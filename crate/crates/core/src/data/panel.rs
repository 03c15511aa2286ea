use std::collections::HashSet;
use std::fmt;
use std::ops::Range;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{EblrError, Result};

/// Characters reserved by the rule grammar; covariate names may not contain them.
pub(crate) const RESERVED_NAME_CHARS: &[char] = &['<', '>', '=', '!', '&'];

/// Position of an observation in time: a calendar instant or a plain integer index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeKey {
    Index(i64),
    Date(NaiveDate),
    DateTime(NaiveDateTime),
}

impl TimeKey {
    /// Parses an integer index, an ISO-8601 date, or an ISO-8601 date-time.
    pub fn parse(text: &str) -> Option<TimeKey> {
        let text = text.trim();
        if let Ok(i) = text.parse::<i64>() {
            return Some(TimeKey::Index(i));
        }
        if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
            return Some(TimeKey::Date(d));
        }
        for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
                return Some(TimeKey::DateTime(dt));
            }
        }
        DateTime::parse_from_rfc3339(text)
            .ok()
            .map(|dt| TimeKey::DateTime(dt.naive_utc()))
    }

    /// Signed distance to `later` in the key's natural unit (index steps, days, seconds).
    pub fn steps_to(&self, later: &TimeKey) -> Option<i64> {
        match (self, later) {
            (TimeKey::Index(a), TimeKey::Index(b)) => Some(b - a),
            (TimeKey::Date(a), TimeKey::Date(b)) => Some((*b - *a).num_days()),
            (TimeKey::DateTime(a), TimeKey::DateTime(b)) => Some((*b - *a).num_seconds()),
            _ => None,
        }
    }

    pub fn is_calendar(&self) -> bool {
        !matches!(self, TimeKey::Index(_))
    }

    fn variant_name(&self) -> &'static str {
        match self {
            TimeKey::Index(_) => "integer index",
            TimeKey::Date(_) => "date",
            TimeKey::DateTime(_) => "date-time",
        }
    }
}

impl fmt::Display for TimeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeKey::Index(i) => write!(f, "{i}"),
            TimeKey::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            TimeKey::DateTime(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%S")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateKind {
    Numeric,
    Binary,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl Covariate {
    pub fn numeric(name: impl Into<String>) -> Self {
        Covariate { name: name.into(), kind: CovariateKind::Numeric }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Covariate { name: name.into(), kind: CovariateKind::Binary }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Covariate {
            name: name.into(),
            kind: CovariateKind::Categorical { levels: levels.into_iter().map(Into::into).collect() },
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            CovariateKind::Categorical { levels } => Some(levels),
            _ => None,
        }
    }
}

/// A single covariate cell. Categorical cells hold an index into the covariate's level list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateValue {
    Number(f64),
    Level(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub timestamp: TimeKey,
    pub target: f64,
    pub covariates: Vec<CovariateValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub id: String,
    pub rows: Vec<Observation>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn targets(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.target)
    }
}

/// N time series with per-observation covariates, sorted by (series id, timestamp).
///
/// Construction validates the invariants: no missing cells, strictly increasing and
/// evenly spaced timestamps, binary cells in {0, 1}, categorical cells from the
/// declared level set, finite targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    series: Vec<Series>,
    schema: Vec<Covariate>,
    targets_known: bool,
}

impl PanelDataset {
    pub fn new(schema: Vec<Covariate>, series: Vec<Series>) -> Result<Self> {
        Self::build(schema, series, true)
    }

    /// Builds a dataset whose target column is unknown (future covariates only).
    /// Targets are stored as 0.0 and must not be scored.
    pub fn without_targets(schema: Vec<Covariate>, mut series: Vec<Series>) -> Result<Self> {
        for s in &mut series {
            for r in &mut s.rows {
                r.target = 0.0;
            }
        }
        Self::build(schema, series, false)
    }

    fn build(schema: Vec<Covariate>, mut series: Vec<Series>, targets_known: bool) -> Result<Self> {
        validate_schema(&schema)?;
        series.retain(|s| !s.rows.is_empty());
        series.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in series.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(EblrError::Integrity(format!("series `{}` declared twice", pair[0].id)));
            }
        }
        let mut step: Option<i64> = None;
        for s in &mut series {
            s.rows.sort_by_key(|r| r.timestamp);
            let first_kind = s.rows[0].timestamp.variant_name();
            for (i, row) in s.rows.iter().enumerate() {
                if row.timestamp.variant_name() != first_kind {
                    return Err(EblrError::Integrity(format!(
                        "series `{}` mixes {} and {} timestamps",
                        s.id,
                        first_kind,
                        row.timestamp.variant_name()
                    )));
                }
                validate_row(&schema, row, targets_known)
                    .map_err(|m| EblrError::Integrity(format!("series `{}` row {i}: {m}", s.id)))?;
            }
            for pair in s.rows.windows(2) {
                let d = pair[0].timestamp.steps_to(&pair[1].timestamp).unwrap_or(0);
                if d == 0 {
                    return Err(EblrError::Integrity(format!(
                        "duplicate observation for series `{}` at {}",
                        s.id, pair[0].timestamp
                    )));
                }
                match step {
                    None => step = Some(d),
                    Some(expected) if expected != d => {
                        return Err(EblrError::Integrity(format!(
                            "series `{}` is not evenly spaced at {} (step {d}, expected {expected})",
                            s.id, pair[1].timestamp
                        )))
                    }
                    _ => {}
                }
            }
        }
        if let Some(first) = series.first() {
            let kind = first.rows[0].timestamp.variant_name();
            if let Some(other) = series.iter().find(|s| s.rows[0].timestamp.variant_name() != kind) {
                return Err(EblrError::Integrity(format!(
                    "series `{}` uses {} timestamps but `{}` uses {kind}",
                    other.id,
                    other.rows[0].timestamp.variant_name(),
                    first.id
                )));
            }
        }
        Ok(PanelDataset { series, schema, targets_known })
    }

    /// Builds from parts already known to satisfy the invariants (slices of a valid dataset).
    pub(crate) fn from_valid_parts(schema: Vec<Covariate>, series: Vec<Series>, targets_known: bool) -> Self {
        PanelDataset { series: series.into_iter().filter(|s| !s.rows.is_empty()).collect(), schema, targets_known }
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    pub fn schema(&self) -> &[Covariate] {
        &self.schema
    }

    pub fn targets_known(&self) -> bool {
        self.targets_known
    }

    pub fn n_rows(&self) -> usize {
        self.series.iter().map(Series::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    /// Targets in vertical order (series order, then time order).
    pub fn targets(&self) -> Vec<f64> {
        self.series.iter().flat_map(Series::targets).collect()
    }

    /// Row keys in vertical order.
    pub fn row_keys(&self) -> Vec<(String, TimeKey)> {
        self.series
            .iter()
            .flat_map(|s| s.rows.iter().map(move |r| (s.id.clone(), r.timestamp)))
            .collect()
    }

    /// Keeps, for every series, the rows selected by `range_for(series_len)`.
    pub fn slice_rows(&self, range_for: impl Fn(usize) -> Range<usize>) -> PanelDataset {
        let series = self
            .series
            .iter()
            .map(|s| Series { id: s.id.clone(), rows: s.rows[range_for(s.len())].to_vec() })
            .collect();
        PanelDataset::from_valid_parts(self.schema.clone(), series, self.targets_known)
    }

    pub(crate) fn with_schema_and_series(&self, schema: Vec<Covariate>, series: Vec<Series>) -> PanelDataset {
        PanelDataset::from_valid_parts(schema, series, self.targets_known)
    }
}

fn validate_schema(schema: &[Covariate]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in schema {
        if c.name.is_empty() || c.name.trim() != c.name {
            return Err(EblrError::Schema(format!("invalid covariate name `{}`", c.name)));
        }
        if let Some(ch) = c.name.chars().find(|ch| RESERVED_NAME_CHARS.contains(ch)) {
            return Err(EblrError::Schema(format!(
                "covariate name `{}` contains reserved character `{ch}`",
                c.name
            )));
        }
        if !seen.insert(c.name.as_str()) {
            return Err(EblrError::Schema(format!("duplicate covariate `{}`", c.name)));
        }
        if let CovariateKind::Categorical { levels } = &c.kind {
            let mut lv = HashSet::new();
            for l in levels {
                if l.contains('&') || l.is_empty() || l.trim() != l {
                    return Err(EblrError::Schema(format!("invalid level `{l}` for covariate `{}`", c.name)));
                }
                if !lv.insert(l.as_str()) {
                    return Err(EblrError::Schema(format!("duplicate level `{l}` for covariate `{}`", c.name)));
                }
            }
        }
    }
    Ok(())
}

fn validate_row(schema: &[Covariate], row: &Observation, targets_known: bool) -> std::result::Result<(), String> {
    if targets_known && !row.target.is_finite() {
        return Err(format!("non-finite target {}", row.target));
    }
    if row.covariates.len() != schema.len() {
        return Err(format!("expected {} covariates, found {}", schema.len(), row.covariates.len()));
    }
    for (cov, value) in schema.iter().zip(&row.covariates) {
        match (&cov.kind, value) {
            (CovariateKind::Numeric, CovariateValue::Number(x)) if x.is_finite() => {}
            (CovariateKind::Binary, CovariateValue::Number(x)) if *x == 0.0 || *x == 1.0 => {}
            (CovariateKind::Categorical { levels }, CovariateValue::Level(l)) if (*l as usize) < levels.len() => {}
            _ => return Err(format!("invalid value {value:?} for covariate `{}`", cov.name)),
        }
    }
    Ok(())
}

/// Splits every series into a training prefix and a test block of the last `horizon` rows.
pub fn split_train_test(ds: &PanelDataset, horizon: usize) -> Result<(PanelDataset, PanelDataset)> {
    if horizon == 0 {
        return Err(EblrError::Split("horizon must be positive".into()));
    }
    if let Some(s) = ds.series.iter().find(|s| s.len() <= horizon) {
        return Err(EblrError::Split(format!(
            "series `{}` has {} rows; at least {} are required for horizon {horizon}",
            s.id,
            s.len(),
            horizon + 1
        )));
    }
    let train = ds.slice_rows(|n| 0..n - horizon);
    let test = ds.slice_rows(|n| n - horizon..n);
    Ok((train, test))
}
