//! Linear base learners: ordinary least squares and the LASSO.
//!
//! OLS solves the centered least-squares problem through an SVD and returns the
//! minimum-norm solution, so duplicated or collinear columns are harmless (the
//! boosting loop produces such columns routinely, e.g. rule indicators that sum to
//! an existing column).
//!
//! The LASSO minimizes
//!
//! ```text
//! (1/2n) ||y - a - X b||^2 + lambda * ||b||_1
//! ```
//!
//! by cyclic coordinate descent on columns standardized to zero mean and unit
//! (population) variance. Constant columns are dropped. The intercept is never
//! penalized and coefficients are reported on the original column scale.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::VerticalMatrix;
use crate::error::{EblrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    /// Zero for columns dropped as constant.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    pub standardization: Vec<ColumnScale>,
    /// Penalty the model was fitted with; `None` for OLS.
    pub lambda: Option<f64>,
    pub warnings: Vec<String>,
}

impl LinearModel {
    pub fn intercept_only(intercept: f64) -> Self {
        LinearModel {
            intercept,
            coefficients: Vec::new(),
            column_names: Vec::new(),
            standardization: Vec::new(),
            lambda: None,
            warnings: Vec::new(),
        }
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.column_names.iter().position(|c| c == name).map(|j| self.coefficients[j])
    }

    /// Evaluates `a + b.x` per row, matching columns by name. Extra columns are ignored.
    pub fn predict(&self, m: &VerticalMatrix) -> Result<Vec<f64>> {
        let cols = self
            .column_names
            .iter()
            .map(|name| m.column(name).ok_or_else(|| EblrError::MissingColumn(name.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..m.n_rows())
            .map(|i| {
                self.coefficients
                    .iter()
                    .zip(&cols)
                    .fold(self.intercept, |acc, (b, col)| acc + b * col[i])
            })
            .collect())
    }
}

pub fn predict(model: &LinearModel, m: &VerticalMatrix) -> Result<Vec<f64>> {
    model.predict(m)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Least squares with an unpenalized intercept; minimum-norm coefficients when the
/// centered design is rank deficient.
pub fn fit_ols(m: &VerticalMatrix) -> Result<LinearModel> {
    let n = m.n_rows();
    if n == 0 {
        return Err(EblrError::Fit("cannot fit a linear model on zero rows".into()));
    }
    let y = m.target();
    let y_mean = mean(y);
    let p = m.n_cols();
    let names: Vec<String> = m.column_names().map(str::to_owned).collect();
    if p == 0 {
        return Ok(LinearModel { column_names: names, ..LinearModel::intercept_only(y_mean) });
    }
    let means: Vec<f64> = (0..p).map(|j| mean(m.column_at(j))).collect();
    let x = DMatrix::from_fn(n, p, |i, j| m.column_at(j)[i] - means[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let svd = x.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let eps = (n.max(p) as f64) * f64::EPSILON * sigma_max;
    let beta = svd.solve(&yc, eps).map_err(|e| EblrError::Fit(e.to_string()))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(b, mu)| b * mu).sum::<f64>();
    Ok(LinearModel {
        intercept,
        coefficients,
        column_names: names,
        standardization: means.into_iter().map(|mean| ColumnScale { mean, scale: 1.0 }).collect(),
        lambda: None,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// Chosen by k-fold cross-validation over the penalty grid.
    Auto,
    Fixed(f64),
}

impl Serialize for Penalty {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Penalty::Auto => s.serialize_str("auto"),
            Penalty::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Penalty {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Value(f64),
        }
        match Repr::deserialize(d)? {
            Repr::Name(s) if s == "auto" => Ok(Penalty::Auto),
            Repr::Name(s) => s.parse().map(Penalty::Fixed).map_err(serde::de::Error::custom),
            Repr::Value(v) => Ok(Penalty::Fixed(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: Penalty,
    pub cv_folds: usize,
    /// Explicit descending grid; `None` uses 50 log-spaced values from lambda_max down
    /// to lambda_max * 1e-4.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    pub max_iters: usize,
    /// Sweeps stop once no coefficient, on the original column scale, moves by more than
    /// `tol` in a sweep.
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig { lambda: Penalty::Auto, cv_folds: 5, lambda_grid: None, max_iters: 1000, tol: 1e-7 }
    }
}

impl LassoConfig {
    pub fn fixed(lambda: f64) -> Self {
        LassoConfig { lambda: Penalty::Fixed(lambda), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Penalty::Fixed(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(EblrError::Config(format!("lambda must be a nonnegative real, got {l}")));
            }
        }
        if self.cv_folds == 0 || self.max_iters == 0 {
            return Err(EblrError::Config("cv_folds and max_iters must be positive".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(EblrError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(EblrError::Config("lambda_grid must hold positive reals".into()));
            }
            if grid.windows(2).any(|w| w[1] >= w[0]) {
                return Err(EblrError::Config("lambda_grid must be strictly descending".into()));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_GRID_LEN: usize = 50;
pub const DEFAULT_GRID_RATIO: f64 = 1e-4;

/// Standardized copy of a design restricted to some rows.
pub(crate) struct Standardized {
    /// Standardized non-constant columns.
    cols: Vec<Vec<f64>>,
    /// Index of each retained column in the original design.
    retained: Vec<usize>,
    scales: Vec<ColumnScale>,
    /// Scale of each retained column, aligned with `cols`.
    retained_scales: Vec<f64>,
    yc: Vec<f64>,
    y_mean: f64,
}

impl Standardized {
    pub(crate) fn new(m: &VerticalMatrix, rows: Option<&[usize]>) -> Self {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..m.n_rows()).collect();
                &all
            }
        };
        let n = rows.len() as f64;
        let y: Vec<f64> = rows.iter().map(|&i| m.target()[i]).collect();
        let y_mean = y.iter().sum::<f64>() / n;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let mut cols = Vec::new();
        let mut retained = Vec::new();
        let mut scales = Vec::new();
        for j in 0..m.n_cols() {
            let col = m.column_at(j);
            let mu = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
            let sd = (rows.iter().map(|&i| (col[i] - mu).powi(2)).sum::<f64>() / n).sqrt();
            if sd <= 1e-12 * mu.abs().max(1.0) {
                scales.push(ColumnScale { mean: mu, scale: 0.0 });
                continue;
            }
            scales.push(ColumnScale { mean: mu, scale: sd });
            retained.push(j);
            cols.push(rows.iter().map(|&i| (col[i] - mu) / sd).collect());
        }
        let retained_scales = retained.iter().map(|&j| scales[j].scale).collect();
        Standardized { cols, retained, scales, retained_scales, yc, y_mean }
    }

    fn n(&self) -> f64 {
        self.yc.len() as f64
    }

    /// Smallest penalty at which every coefficient is zero.
    pub(crate) fn lambda_max(&self) -> f64 {
        let n = self.n();
        self.cols
            .iter()
            .map(|c| (c.iter().zip(&self.yc).map(|(x, y)| x * y).sum::<f64>() / n).abs())
            .fold(0.0, f64::max)
    }

    /// Converts standardized coefficients back to an original-scale model.
    fn to_model(&self, beta: &[f64], names: Vec<String>, lambda: f64, warnings: Vec<String>) -> LinearModel {
        let mut coefficients = vec![0.0; self.scales.len()];
        for (k, &j) in self.retained.iter().enumerate() {
            coefficients[j] = beta[k] / self.scales[j].scale;
        }
        let intercept =
            self.y_mean - coefficients.iter().zip(&self.scales).map(|(b, s)| b * s.mean).sum::<f64>();
        LinearModel {
            intercept,
            coefficients,
            column_names: names,
            standardization: self.scales.clone(),
            lambda: Some(lambda),
            warnings,
        }
    }
}

/// Outcome of coordinate descent at one penalty value.
pub(crate) struct CdOutcome {
    pub(crate) converged: bool,
    pub(crate) sweeps: usize,
    /// Objective value after each full sweep.
    #[allow(dead_code)]
    pub(crate) objectives: Vec<f64>,
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Runs cyclic coordinate descent in place from the warm start in `beta`.
pub(crate) fn coordinate_descent(
    s: &Standardized,
    beta: &mut [f64],
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> CdOutcome {
    let n = s.n();
    let mut resid = s.yc.clone();
    for (col, b) in s.cols.iter().zip(beta.iter()) {
        if *b != 0.0 {
            for (r, x) in resid.iter_mut().zip(col) {
                *r -= x * b;
            }
        }
    }
    let mut objectives = Vec::new();
    for sweep in 1..=max_iters {
        let mut max_delta = 0.0_f64;
        for ((col, b), scale) in s.cols.iter().zip(beta.iter_mut()).zip(&s.retained_scales) {
            let rho = col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n + *b;
            let updated = soft_threshold(rho, lambda);
            let delta = updated - *b;
            if delta != 0.0 {
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= x * delta;
                }
                *b = updated;
            }
            max_delta = max_delta.max(delta.abs() / scale);
        }
        let rss = resid.iter().map(|r| r * r).sum::<f64>();
        objectives.push(rss / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>());
        if max_delta <= tol {
            return CdOutcome { converged: true, sweeps: sweep, objectives };
        }
    }
    CdOutcome { converged: false, sweeps: max_iters, objectives }
}

pub(crate) fn default_grid(lambda_max: f64) -> Vec<f64> {
    if lambda_max <= 0.0 {
        return vec![0.0];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * DEFAULT_GRID_RATIO).ln());
    (0..DEFAULT_GRID_LEN)
        .map(|k| (hi + (lo - hi) * k as f64 / (DEFAULT_GRID_LEN - 1) as f64).exp())
        .collect()
}

/// Warm-started path over a descending grid. Returns the standardized coefficients at
/// every grid point and any convergence warnings.
pub(crate) fn lasso_path(s: &Standardized, grid: &[f64], cfg: &LassoConfig) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut beta = vec![0.0; s.cols.len()];
    let mut path = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    for &lambda in grid {
        let out = coordinate_descent(s, &mut beta, lambda, cfg.max_iters, cfg.tol);
        if !out.converged {
            warnings.push(format!(
                "coordinate descent did not converge after {} sweeps at lambda={lambda}",
                out.sweeps
            ));
        }
        path.push(beta.clone());
    }
    (path, warnings)
}

/// Contiguous, near-equal blocks of row indices.
pub(crate) fn block_folds(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    (0..k).map(|f| f * n / k..(f + 1) * n / k).collect()
}

fn cross_validate(m: &VerticalMatrix, grid: &[f64], cfg: &LassoConfig) -> Vec<f64> {
    let n = m.n_rows();
    let fold_errors: Vec<Vec<f64>> = block_folds(n, cfg.cv_folds)
        .into_par_iter()
        .map(|valid| {
            let train: Vec<usize> = (0..valid.start).chain(valid.end..n).collect();
            let s = Standardized::new(m, Some(&train));
            let (path, _) = lasso_path(&s, grid, cfg);
            path.iter()
                .map(|beta| {
                    let model = s.to_model(beta, Vec::new(), 0.0, Vec::new());
                    let sse: f64 = valid
                        .clone()
                        .map(|i| {
                            let pred = model
                                .coefficients
                                .iter()
                                .enumerate()
                                .fold(model.intercept, |acc, (j, b)| acc + b * m.column_at(j)[i]);
                            (m.target()[i] - pred).powi(2)
                        })
                        .sum();
                    sse / valid.len() as f64
                })
                .collect()
        })
        .collect();
    (0..grid.len())
        .map(|g| fold_errors.iter().map(|e| e[g]).sum::<f64>() / fold_errors.len() as f64)
        .collect()
}

pub fn fit_lasso(m: &VerticalMatrix, cfg: &LassoConfig) -> Result<LinearModel> {
    cfg.validate()?;
    let n = m.n_rows();
    if n == 0 {
        return Err(EblrError::Fit("cannot fit a linear model on zero rows".into()));
    }
    let names: Vec<String> = m.column_names().map(str::to_owned).collect();
    let s = Standardized::new(m, None);
    let lambda_max = s.lambda_max();

    let (lambda, warm_grid) = match cfg.lambda {
        Penalty::Fixed(l) => (l, vec![l]),
        Penalty::Auto => {
            if n < cfg.cv_folds {
                return Err(EblrError::Fit(format!(
                    "{n} rows are too few for {}-fold cross-validation",
                    cfg.cv_folds
                )));
            }
            let grid = cfg.lambda_grid.clone().unwrap_or_else(|| default_grid(lambda_max));
            let cv = cross_validate(m, &grid, cfg);
            // First minimum on a descending grid favours the sparser model on ties.
            let best = cv
                .iter()
                .enumerate()
                .fold(0, |best, (g, e)| if *e < cv[best] { g } else { best });
            (grid[best], grid[..=best].to_vec())
        }
    };
    let (path, warnings) = lasso_path(&s, &warm_grid, cfg);
    let beta = path.last().expect("grid is never empty");
    Ok(s.to_model(beta, names, lambda, warnings))
}
