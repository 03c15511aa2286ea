//! Synthetic daily-sales generator: a second-order autoregressive recurrence driven by
//! weekend, promotion and weekend×promotion effects plus Gaussian noise.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::panel::{Covariate, CovariateValue, Observation, PanelDataset, Series, TimeKey};
use crate::error::{EblrError, Result};

pub const IS_WEEKEND: &str = "isWeekend";
pub const IS_PROMOTION: &str = "isPromotion";
pub const SYNTHETIC_SERIES_ID: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub length: usize,
    pub noise_mean: f64,
    pub noise_std: f64,
    pub ar1: f64,
    pub ar2: f64,
    pub weekend_effect: f64,
    pub promo_effect: f64,
    pub interaction_effect: f64,
    pub promo_probability: f64,
    pub rng_seed: u64,
    /// First day of the series. Must be a Monday so the weekend cycle lines up with the calendar.
    pub start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            length: 2048,
            noise_mean: 5000.0,
            noise_std: 150.0,
            ar1: -0.4,
            ar2: 0.5,
            weekend_effect: 3000.0,
            promo_effect: 1500.0,
            interaction_effect: 5500.0,
            promo_probability: 0.2,
            rng_seed: 42,
            start: NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date"),
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        SynthConfig { rng_seed: seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EblrError::Config(m));
        if self.length == 0 {
            return bad("length must be positive".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!("noise_std must be a nonnegative real, got {}", self.noise_std));
        }
        if !(0.0..=1.0).contains(&self.promo_probability) {
            return bad(format!("promo_probability must lie in [0, 1], got {}", self.promo_probability));
        }
        let reals = [
            self.noise_mean,
            self.ar1,
            self.ar2,
            self.weekend_effect,
            self.promo_effect,
            self.interaction_effect,
        ];
        if reals.iter().any(|x| !x.is_finite()) {
            return bad("generator coefficients must be finite".into());
        }
        use chrono::Datelike;
        if self.start.weekday() != chrono::Weekday::Mon {
            return bad(format!("start date {} is not a Monday", self.start));
        }
        Ok(())
    }
}

/// Days 6 and 7 of the Monday-first weekly cycle.
pub fn is_weekend_day(day: usize) -> bool {
    day % 7 >= 5
}

/// Generates one daily series of `cfg.length` observations. The recurrence starts from
/// two zero pre-sample values; per day the generator draws the promotion flag first,
/// then one standard normal for the noise.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<PanelDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let (mut lag1, mut lag2) = (0.0_f64, 0.0_f64);
    let mut rows = Vec::with_capacity(cfg.length);
    for day in 0..cfg.length {
        let promo = rng.random::<f64>() < cfg.promo_probability;
        let z: f64 = rng.sample(StandardNormal);
        let weekend = is_weekend_day(day);
        let (w, p) = (f64::from(u8::from(weekend)), f64::from(u8::from(promo)));
        let y = cfg.ar1 * lag1
            + cfg.ar2 * lag2
            + cfg.interaction_effect * w * p
            + cfg.promo_effect * p
            + cfg.weekend_effect * w
            + cfg.noise_mean
            + cfg.noise_std * z;
        lag2 = lag1;
        lag1 = y;
        let date = cfg.start.checked_add_days(Days::new(day as u64)).ok_or_else(|| {
            EblrError::Config(format!("length {} overflows the calendar", cfg.length))
        })?;
        rows.push(Observation {
            timestamp: TimeKey::Date(date),
            target: y,
            covariates: vec![CovariateValue::Number(w), CovariateValue::Number(p)],
        });
    }
    PanelDataset::new(
        vec![Covariate::binary(IS_WEEKEND), Covariate::binary(IS_PROMOTION)],
        vec![Series { id: SYNTHETIC_SERIES_ID.into(), rows }],
    )
}
