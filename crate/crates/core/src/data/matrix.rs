use std::collections::HashMap;

use super::panel::{Covariate, CovariateKind, CovariateValue, PanelDataset, TimeKey};
use crate::error::{EblrError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Numeric,
    Binary,
    /// Indicator for one level of a categorical covariate.
    OneHot { level: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnInfo {
    pub name: String,
    /// Covariate the column was derived from (itself for numeric and binary columns).
    pub source: String,
    pub kind: ColumnKind,
}

impl ColumnInfo {
    pub fn numeric(name: impl Into<String>) -> Self {
        let name = name.into();
        ColumnInfo { source: name.clone(), name, kind: ColumnKind::Numeric }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        let name = name.into();
        ColumnInfo { source: name.clone(), name, kind: ColumnKind::Binary }
    }

    pub fn one_hot(source: &str, level: &str) -> Self {
        ColumnInfo { name: one_hot_name(source, level), source: source.into(), kind: ColumnKind::OneHot { level: level.into() } }
    }
}

pub fn one_hot_name(source: &str, level: &str) -> String {
    format!("{source}={level}")
}

/// Panel data flattened to one row per observation, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalMatrix {
    columns: Vec<Vec<f64>>,
    info: Vec<ColumnInfo>,
    index: HashMap<String, usize>,
    target: Vec<f64>,
    row_keys: Vec<(String, TimeKey)>,
}

impl VerticalMatrix {
    /// Builds a matrix from explicit columns. Row keys default to integer indices of a
    /// single unnamed series.
    pub fn from_columns(info: Vec<ColumnInfo>, columns: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        let row_keys = (0..target.len()).map(|i| (String::new(), TimeKey::Index(i as i64))).collect();
        let mut m = VerticalMatrix { columns: Vec::new(), info: Vec::new(), index: HashMap::new(), target, row_keys };
        for (ci, col) in info.into_iter().zip(columns) {
            m.push_column(ci, col)?;
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn row_keys(&self) -> &[(String, TimeKey)] {
        &self.row_keys
    }

    pub fn columns(&self) -> &[ColumnInfo] {
        &self.info
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.info.iter().map(|c| c.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|j| self.columns[j].as_slice())
    }

    pub fn column_at(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn push_column(&mut self, info: ColumnInfo, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n_rows() {
            return Err(EblrError::Integrity(format!(
                "column `{}` has {} rows, matrix has {}",
                info.name,
                values.len(),
                self.n_rows()
            )));
        }
        if self.index.contains_key(&info.name) {
            return Err(EblrError::Integrity(format!("duplicate column `{}`", info.name)));
        }
        self.index.insert(info.name.clone(), self.columns.len());
        self.info.push(info);
        self.columns.push(values);
        Ok(())
    }

    /// Same rows and target, no columns.
    pub fn without_columns(&self) -> VerticalMatrix {
        VerticalMatrix {
            columns: Vec::new(),
            info: Vec::new(),
            index: HashMap::new(),
            target: self.target.clone(),
            row_keys: self.row_keys.clone(),
        }
    }

    /// Same rows, only the named columns, in the given order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<VerticalMatrix> {
        let mut out = self.without_columns();
        for name in names {
            let j = self.column_index(name.as_ref()).ok_or_else(|| EblrError::MissingColumn(name.as_ref().to_owned()))?;
            out.push_column(self.info[j].clone(), self.columns[j].clone())?;
        }
        Ok(out)
    }

    /// Keeps the rows whose indices are listed, in that order.
    pub fn take_rows(&self, rows: &[usize]) -> VerticalMatrix {
        VerticalMatrix {
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            info: self.info.clone(),
            index: self.index.clone(),
            target: rows.iter().map(|&i| self.target[i]).collect(),
            row_keys: rows.iter().map(|&i| self.row_keys[i].clone()).collect(),
        }
    }
}

/// Flattens a dataset using its own schema. Categoricals are one-hot encoded in schema
/// order, then level order.
pub fn vertical_matrix(ds: &PanelDataset) -> VerticalMatrix {
    vertical_matrix_for_schema(ds, ds.schema()).expect("a dataset always matches its own schema")
}

/// Flattens a dataset against a reference schema (typically a trained model's snapshot).
/// Categorical levels are matched by name; levels unknown to the reference schema encode
/// as all-zero indicator rows.
pub fn vertical_matrix_for_schema(ds: &PanelDataset, schema: &[Covariate]) -> Result<VerticalMatrix> {
    let n = ds.n_rows();
    let target = ds.targets();
    let row_keys = ds.row_keys();
    let mut m = VerticalMatrix { columns: Vec::new(), info: Vec::new(), index: HashMap::new(), target, row_keys };

    for cov in schema {
        let j = ds.covariate_index(&cov.name).ok_or_else(|| EblrError::MissingColumn(cov.name.clone()))?;
        let src = &ds.schema()[j];
        let cells = ds.series().iter().flat_map(|s| s.rows.iter().map(move |r| r.covariates[j]));
        match (&cov.kind, &src.kind) {
            (CovariateKind::Numeric | CovariateKind::Binary, CovariateKind::Numeric | CovariateKind::Binary) => {
                let values: Vec<f64> = cells
                    .map(|v| match v {
                        CovariateValue::Number(x) => x,
                        CovariateValue::Level(_) => unreachable!("validated numeric cell"),
                    })
                    .collect();
                if cov.kind == CovariateKind::Binary && values.iter().any(|&x| x != 0.0 && x != 1.0) {
                    return Err(EblrError::Schema(format!("covariate `{}` must be binary", cov.name)));
                }
                let info = match cov.kind {
                    CovariateKind::Binary => ColumnInfo::binary(&cov.name),
                    _ => ColumnInfo::numeric(&cov.name),
                };
                m.push_column(info, values)?;
            }
            (CovariateKind::Categorical { levels }, CovariateKind::Categorical { levels: src_levels }) => {
                // Source level index -> reference level index.
                let remap: Vec<Option<usize>> = src_levels.iter().map(|l| levels.iter().position(|r| r == l)).collect();
                let mut cols = vec![vec![0.0; n]; levels.len()];
                for (i, v) in cells.enumerate() {
                    if let CovariateValue::Level(l) = v {
                        if let Some(k) = remap[l as usize] {
                            cols[k][i] = 1.0;
                        }
                    }
                }
                for (level, col) in levels.iter().zip(cols) {
                    m.push_column(ColumnInfo::one_hot(&cov.name, level), col)?;
                }
            }
            _ => {
                return Err(EblrError::Schema(format!(
                    "covariate `{}` kind does not match the reference schema",
                    cov.name
                )))
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::data::{Observation, Series};

    fn ds(days: &[u32], weekend: &[f64]) -> PanelDataset {
        let rows = days
            .iter()
            .zip(weekend)
            .enumerate()
            .map(|(t, (&d, &w))| Observation {
                timestamp: TimeKey::Index(t as i64),
                target: t as f64,
                covariates: vec![CovariateValue::Number(w), CovariateValue::Level(d)],
            })
            .collect();
        PanelDataset::new(
            vec![Covariate::binary("isWeekend"), Covariate::categorical("day_of_week", ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"])],
            vec![Series { id: "a".into(), rows }],
        )
        .unwrap()
    }

    #[test]
    fn one_hot_shape_and_order() {
        let m = vertical_matrix(&ds(&[0, 5, 6], &[0.0, 1.0, 1.0]));
        assert_eq!((m.n_rows(), m.n_cols()), (3, 8));
        let names: Vec<_> = m.column_names().collect();
        assert_eq!(names[0], "isWeekend");
        assert_eq!(names[1], "day_of_week=Mon");
        assert_eq!(names[7], "day_of_week=Sun");
        assert_eq!(m.column("day_of_week=Sat").unwrap(), &[0.0, 1.0, 0.0]);
        assert_eq!(m.target(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn no_covariates() {
        let rows = (0..4).map(|t| Observation { timestamp: TimeKey::Index(t), target: 1.0, covariates: vec![] }).collect();
        let ds = PanelDataset::new(vec![], vec![Series { id: "a".into(), rows }]).unwrap();
        let m = vertical_matrix(&ds);
        assert_eq!((m.n_rows(), m.n_cols()), (4, 0));
        assert_eq!(m.target(), &[1.0; 4]);
    }

    #[test]
    fn row_keys_unique() {
        let m = vertical_matrix(&ds(&[0, 1, 2, 3], &[0.0; 4]));
        let keys: HashSet<_> = m.row_keys().iter().collect();
        assert_eq!(keys.len(), m.n_rows());
    }

    #[test]
    fn unseen_levels_encode_as_zero() {
        let future = ds(&[6], &[1.0]);
        let reference = vec![Covariate::binary("isWeekend"), Covariate::categorical("day_of_week", ["Mon", "Sat"])];
        let m = vertical_matrix_for_schema(&future, &reference).unwrap();
        assert_eq!(m.n_cols(), 3);
        assert_eq!(m.column("day_of_week=Mon").unwrap(), &[0.0]);
        assert_eq!(m.column("day_of_week=Sat").unwrap(), &[0.0]);

        let missing = vec![Covariate::binary("isPromo")];
        assert!(matches!(vertical_matrix_for_schema(&future, &missing), Err(EblrError::MissingColumn(c)) if c == "isPromo"));
    }
}
