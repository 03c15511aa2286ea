use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate};

use super::panel::{Covariate, CovariateKind, CovariateValue, PanelDataset, Series, TimeKey};
use crate::error::{EblrError, Result};

pub const DAY_OF_WEEK: &str = "day_of_week";
pub const DAY_OF_MONTH: &str = "day_of_month";
pub const MONTH: &str = "month";
pub const YEAR: &str = "year";
pub const IS_WEEKEND: &str = "is_weekend";

const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

fn date_of(t: &TimeKey) -> Option<NaiveDate> {
    match t {
        TimeKey::Date(d) => Some(*d),
        TimeKey::DateTime(dt) => Some(dt.date()),
        TimeKey::Index(_) => None,
    }
}

/// Decomposes calendar timestamps into day-of-week, day-of-month, month and year
/// categoricals plus a binary weekend flag. Covariates that already exist are left
/// alone, so applying this twice is the same as applying it once.
pub fn expand_calendar(ds: &PanelDataset) -> Result<PanelDataset> {
    let mut years = BTreeSet::new();
    for s in ds.series() {
        for r in &s.rows {
            let d = date_of(&r.timestamp).ok_or_else(|| {
                EblrError::Calendar(format!("series `{}` uses integer time indices, not calendar instants", s.id))
            })?;
            years.insert(d.year());
        }
    }

    type Extract = fn(NaiveDate) -> u32;
    let candidates: Vec<(Covariate, Extract)> = vec![
        (Covariate::categorical(DAY_OF_WEEK, WEEKDAYS), |d| d.weekday().num_days_from_monday()),
        (Covariate::categorical(DAY_OF_MONTH, (1..=31).map(|i| i.to_string())), |d| d.day0()),
        (Covariate::categorical(MONTH, (1..=12).map(|i| i.to_string())), |d| d.month0()),
        (Covariate::binary(IS_WEEKEND), |d| u32::from(d.weekday().num_days_from_monday() >= 5)),
    ];
    let year_levels: Vec<i32> = years.into_iter().collect();

    let mut schema = ds.schema().to_vec();
    let mut added: Vec<Extract> = Vec::new();
    let mut add_year = false;
    for (cov, f) in candidates {
        if ds.covariate_index(&cov.name).is_none() {
            schema.push(cov);
            added.push(f);
        }
    }
    if ds.covariate_index(YEAR).is_none() {
        schema.push(Covariate::categorical(YEAR, year_levels.iter().map(|y| y.to_string())));
        add_year = true;
    }
    if schema.len() == ds.schema().len() {
        return Ok(ds.clone());
    }

    let first_new = ds.schema().len();
    let series = ds
        .series()
        .iter()
        .map(|s| Series {
            id: s.id.clone(),
            rows: s
                .rows
                .iter()
                .map(|r| {
                    let d = date_of(&r.timestamp).expect("checked above");
                    let mut row = r.clone();
                    for (k, f) in added.iter().enumerate() {
                        let v = f(d);
                        row.covariates.push(match schema[first_new + k].kind {
                            CovariateKind::Binary => CovariateValue::Number(v as f64),
                            _ => CovariateValue::Level(v),
                        });
                    }
                    if add_year {
                        let idx = year_levels.binary_search(&d.year()).expect("year collected above");
                        row.covariates.push(CovariateValue::Level(idx as u32));
                    }
                    row
                })
                .collect(),
        })
        .collect();
    Ok(ds.with_schema_and_series(schema, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    fn dataset(dates: &[&str]) -> PanelDataset {
        let rows = dates
            .iter()
            .enumerate()
            .map(|(i, d)| Observation {
                timestamp: TimeKey::parse(d).unwrap(),
                target: i as f64,
                covariates: vec![CovariateValue::Number(0.0)],
            })
            .collect();
        PanelDataset::new(vec![Covariate::binary("isPromo")], vec![Series { id: "s".into(), rows }]).unwrap()
    }

    fn value(ds: &PanelDataset, row: usize, name: &str) -> String {
        let j = ds.covariate_index(name).unwrap();
        match (ds.series()[0].rows[row].covariates[j], ds.schema()[j].levels()) {
            (CovariateValue::Level(l), Some(levels)) => levels[l as usize].clone(),
            (CovariateValue::Number(x), _) => x.to_string(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn monday_and_saturday() {
        let ds = expand_calendar(&dataset(&["2015-06-01", "2015-06-02", "2015-06-03", "2015-06-04", "2015-06-05", "2015-06-06"]))
            .unwrap();
        assert_eq!(value(&ds, 0, DAY_OF_WEEK), "Mon");
        assert_eq!(value(&ds, 0, IS_WEEKEND), "0");
        assert_eq!(value(&ds, 5, DAY_OF_WEEK), "Sat");
        assert_eq!(value(&ds, 5, IS_WEEKEND), "1");
        assert_eq!(value(&ds, 0, MONTH), "6");
        assert_eq!(value(&ds, 0, DAY_OF_MONTH), "1");
        assert_eq!(value(&ds, 0, YEAR), "2015");
        assert_eq!(ds.schema()[ds.covariate_index(DAY_OF_WEEK).unwrap()].levels().unwrap().len(), 7);
    }

    #[test]
    fn idempotent_and_target_preserving() {
        let base = dataset(&["2015-12-30", "2015-12-31", "2016-01-01"]);
        let once = expand_calendar(&base).unwrap();
        let twice = expand_calendar(&once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.targets(), base.targets());
        assert_eq!(once.schema()[0], base.schema()[0]);
        assert_eq!(once.schema().len(), base.schema().len() + 5);
    }

    #[test]
    fn integer_index_rejected() {
        assert!(matches!(expand_calendar(&dataset(&["1", "2"])), Err(EblrError::Calendar(_))));
    }
}
