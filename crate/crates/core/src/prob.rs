//! Quantile forecasts: the point forecast shifted by empirical quantiles of the pooled
//! training residuals.

use crate::data::{PanelDataset, TimeKey};
use crate::eblr::EblrModel;
use crate::error::{EblrError, Result};

pub const DEFAULT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileMethod {
    /// Linear interpolation at zero-based position `(n - 1) * rho`.
    Interpolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualQuantiles {
    sorted: Vec<f64>,
    pub method: QuantileMethod,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(EblrError::Domain(format!("quantile level {rho} is outside (0, 1)")))
    }
}

impl ResidualQuantiles {
    pub fn new(residuals: &[f64]) -> Result<Self> {
        if residuals.is_empty() {
            return Err(EblrError::Domain("no residuals to take quantiles of".into()));
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(EblrError::Domain("residuals must be finite".into()));
        }
        let mut sorted = residuals.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(ResidualQuantiles { sorted, method: QuantileMethod::Interpolated })
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn quantile(&self, rho: f64) -> Result<f64> {
        check_rho(rho)?;
        let s = &self.sorted;
        let pos = (s.len() - 1) as f64 * rho;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(s.len() - 1);
        let q = s[lo] + (pos - lo as f64) * (s[hi] - s[lo]);
        Ok(q.clamp(s[lo], s[hi]))
    }
}

pub fn residual_quantile(rq: &ResidualQuantiles, rho: f64) -> Result<f64> {
    rq.quantile(rho)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDistribution {
    pub series_id: String,
    pub timestamp: TimeKey,
    pub point: f64,
    /// `(rho, value)` in ascending `rho`.
    pub quantiles: Vec<(f64, f64)>,
}

fn check_rhos(rhos: &[f64]) -> Result<()> {
    for &rho in rhos {
        check_rho(rho)?;
    }
    if rhos.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EblrError::Domain("quantile levels must be strictly increasing".into()));
    }
    Ok(())
}

impl EblrModel {
    pub fn residual_quantiles(&self) -> Result<ResidualQuantiles> {
        ResidualQuantiles::new(&self.training_residuals)
    }
}

pub fn predict_quantiles(model: &EblrModel, future: &PanelDataset, rhos: &[f64]) -> Result<Vec<ForecastDistribution>> {
    check_rhos(rhos)?;
    let points = model.predict_point(future)?;
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let rq = model.residual_quantiles()?;
    let offsets = rhos.iter().map(|&rho| rq.quantile(rho)).collect::<Result<Vec<_>>>()?;
    Ok(points
        .into_iter()
        .map(|p| ForecastDistribution {
            quantiles: rhos.iter().zip(&offsets).map(|(&rho, off)| (rho, p.point + off)).collect(),
            series_id: p.series_id,
            timestamp: p.timestamp,
            point: p.point,
        })
        .collect())
}

/// Equal-tailed interval with coverage `alpha`.
pub fn prediction_interval(model: &EblrModel, future: &PanelDataset, alpha: f64) -> Result<Vec<(f64, f64)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EblrError::Domain(format!("coverage {alpha} is outside (0, 1)")));
    }
    let rhos = [(1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0];
    Ok(predict_quantiles(model, future, &rhos)?
        .into_iter()
        .map(|d| (d.quantiles[0].1, d.quantiles[1].1))
        .collect())
}
