//! Scale-free error metrics and a rolling-origin backtest.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::PanelDataset;
use crate::eblr::{fit_eblr, EblrConfig, EblrModel};
use crate::error::{EblrError, Result};
use crate::prob::predict_quantiles;

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(EblrError::UndefinedMetric(format!("{} targets vs {} forecasts", y.len(), yhat.len())));
    }
    if y.is_empty() {
        return Err(EblrError::UndefinedMetric("no observations".into()));
    }
    Ok(())
}

fn abs_total(y: &[f64]) -> Result<f64> {
    let total: f64 = y.iter().map(|v| v.abs()).sum();
    if total > 0.0 {
        Ok(total)
    } else {
        Err(EblrError::UndefinedMetric("targets sum to zero in absolute value".into()))
    }
}

/// Root mean squared error over mean absolute target.
pub fn nrmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let n = y.len() as f64;
    let mean_abs = abs_total(y)? / n;
    let mse = y.iter().zip(yhat).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / n;
    Ok(mse.sqrt() / mean_abs)
}

/// Total absolute error over total absolute target.
pub fn nd(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let total = abs_total(y)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (b - a).abs()).sum::<f64>() / total)
}

/// Pinball loss of the `rho` quantile forecast, scaled by total absolute target.
pub fn wspl(y: &[f64], yhat: &[f64], rho: f64) -> Result<f64> {
    check_lengths(y, yhat)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(EblrError::Domain(format!("quantile level {rho} is outside (0, 1)")));
    }
    let total = abs_total(y)?;
    let loss: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, q)| f64::max(rho * (a - q), (1.0 - rho) * (q - a)))
        .sum();
    Ok(loss / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileScore {
    pub rho: f64,
    pub wspl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    /// 1-based, oldest first.
    pub window: usize,
    pub horizon: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub nrmse: f64,
    pub nd: f64,
    pub wspl: Vec<QuantileScore>,
    pub mean_wspl: f64,
    pub rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub nrmse: f64,
    pub nd: f64,
    pub wspl: Vec<QuantileScore>,
    pub mean_wspl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub config_hash: String,
    pub n_windows: usize,
    pub horizon: usize,
    pub windows: Vec<WindowResult>,
    pub aggregates: Aggregates,
}

pub fn config_hash(cfg: &EblrConfig) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(cfg)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Training prefix and test block of window `k` (1-based, oldest first).
pub fn window_split(ds: &PanelDataset, n_windows: usize, horizon: usize, k: usize) -> (PanelDataset, PanelDataset) {
    let back = (n_windows - k + 1) * horizon;
    let train = ds.slice_rows(|len| 0..len - back);
    let test = ds.slice_rows(|len| len - back..len - back + horizon);
    (train, test)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

fn score_window(model: &EblrModel, test: &PanelDataset, rhos: &[f64]) -> Result<(f64, f64, Vec<QuantileScore>)> {
    let y = test.targets();
    let dist = predict_quantiles(model, test, rhos)?;
    let point: Vec<f64> = dist.iter().map(|d| d.point).collect();
    let wspl_scores = rhos
        .iter()
        .enumerate()
        .map(|(j, &rho)| {
            let q: Vec<f64> = dist.iter().map(|d| d.quantiles[j].1).collect();
            Ok(QuantileScore { rho, wspl: wspl(&y, &q, rho)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((nrmse(&y, &point)?, nd(&y, &point)?, wspl_scores))
}

/// Expanding-origin backtest of an arbitrary fitting procedure. The test blocks are the
/// last `n_windows` non-overlapping blocks of `horizon` steps of every series.
pub fn backtest_with<F>(
    ds: &PanelDataset,
    n_windows: usize,
    horizon: usize,
    rhos: &[f64],
    config_hash: String,
    fit: F,
) -> Result<BacktestReport>
where
    F: Fn(&PanelDataset) -> Result<EblrModel> + Sync,
{
    if n_windows == 0 || horizon == 0 {
        return Err(EblrError::Backtest("n_windows and horizon must be positive".into()));
    }
    if !ds.targets_known() {
        return Err(EblrError::Backtest("dataset has no target values".into()));
    }
    let required = n_windows * horizon + 1;
    if let Some(s) = ds.series().iter().find(|s| s.len() < required) {
        return Err(EblrError::Backtest(format!(
            "series `{}` has {} rows; {n_windows} windows of horizon {horizon} need at least {required}",
            s.id,
            s.len()
        )));
    }
    let windows = (1..=n_windows)
        .into_par_iter()
        .map(|k| {
            let (train, test) = window_split(ds, n_windows, horizon, k);
            let model = fit(&train)?;
            let (nrmse, nd, wspl) = score_window(&model, &test, rhos)?;
            Ok(WindowResult {
                window: k,
                horizon,
                train_rows: train.n_rows(),
                test_rows: test.n_rows(),
                nrmse,
                nd,
                mean_wspl: mean(wspl.iter().map(|q| q.wspl)),
                wspl,
                rules: model.rules.iter().map(|r| r.canonical()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregates = Aggregates {
        nrmse: mean(windows.iter().map(|w| w.nrmse)),
        nd: mean(windows.iter().map(|w| w.nd)),
        wspl: rhos
            .iter()
            .enumerate()
            .map(|(j, &rho)| QuantileScore { rho, wspl: mean(windows.iter().map(|w| w.wspl[j].wspl)) })
            .collect(),
        mean_wspl: mean(windows.iter().map(|w| w.mean_wspl)),
    };
    Ok(BacktestReport { config_hash, n_windows, horizon, windows, aggregates })
}

pub fn backtest(ds: &PanelDataset, cfg: &EblrConfig, n_windows: usize, horizon: usize, rhos: &[f64]) -> Result<BacktestReport> {
    cfg.validate()?;
    backtest_with(ds, n_windows, horizon, rhos, config_hash(cfg)?, |train| fit_eblr(train, cfg))
}

pub const REPORT_CSV_HEADER: [&str; 4] = ["window", "horizon", "metric", "value"];

fn metric_rows(nrmse: f64, nd: f64, wspl: &[QuantileScore], mean_wspl: f64) -> Vec<(String, f64)> {
    let mut rows = vec![("nrmse".to_owned(), nrmse), ("nd".to_owned(), nd)];
    rows.extend(wspl.iter().map(|q| (format!("wspl_{}", q.rho), q.wspl)));
    rows.push(("mean_wspl".to_owned(), mean_wspl));
    rows
}

impl BacktestReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per window and metric, then the aggregates under window `mean`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(REPORT_CSV_HEADER)?;
        for win in &self.windows {
            for (metric, value) in metric_rows(win.nrmse, win.nd, &win.wspl, win.mean_wspl) {
                w.write_record([win.window.to_string(), self.horizon.to_string(), metric, value.to_string()])?;
            }
        }
        let a = &self.aggregates;
        for (metric, value) in metric_rows(a.nrmse, a.nd, &a.wspl, a.mean_wspl) {
            w.write_record(["mean".to_owned(), self.horizon.to_string(), metric, value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
