use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eblr_core::data::CsvSchema;
use eblr_core::tree::TreeConfig;
use eblr_core::{
    BaseLearner, EblrConfig, InitialFeatures, LassoConfig, Penalty, DEFAULT_QUANTILES,
};

use crate::error::{CliError, CliResult};

/// Explainable boosted linear regression forecasting.
///
/// Exit codes: 0 success, 1 validation error (bad flags, refused overwrite),
/// 2 runtime or data error.
#[derive(Debug, Parser)]
#[command(name = "eblr", version)]
pub struct RunConfig {
    /// Seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads for parallel sections (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic daily sales series as CSV.
    Synth(SynthArgs),
    /// Fit a model and write it with its learning curve.
    Train(TrainArgs),
    /// Point and quantile forecasts for future covariate rows.
    Forecast(ForecastArgs),
    /// Expanding-origin backtest with NRMSE, ND and WSPL.
    Evaluate(EvaluateArgs),
    /// Rule report and covariate importance of a saved model.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2048)]
    pub length: usize,
    /// Standard deviation of the daily noise term.
    #[arg(long, default_value_t = 150.0, allow_negative_numbers = true)]
    pub noise_std: f64,
    /// Probability that a day carries a promotion.
    #[arg(long, default_value_t = 0.2)]
    pub promo_probability: f64,
    #[arg(short, long, env = "EBLR_SYNTH_OUT", default_value = "synth.csv")]
    pub output: PathBuf,
}

/// How CSV columns map to series id, timestamp and target.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(short, long, env = "EBLR_DATA", default_value = "synth.csv")]
    pub input: PathBuf,
    /// JSON sidecar with the column mapping; overrides the column flags.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Series id column (default: `series_id` when present, else a single series).
    #[arg(long)]
    pub series_col: Option<String>,
    #[arg(long, default_value = "timestamp")]
    pub time_col: String,
    #[arg(long, default_value = "target")]
    pub target_col: String,
    /// Add day-of-week, day-of-month, month, year and weekend covariates.
    #[arg(long)]
    pub calendar: bool,
}

impl DataArgs {
    pub fn csv_schema(&self, header: &[String]) -> CliResult<CsvSchema> {
        if let Some(path) = &self.schema {
            return CsvSchema::from_json_file(path).map_err(|e| {
                CliError::Validation(format!("cannot read schema `{}`: {e}", path.display()))
            });
        }
        Ok(CsvSchema {
            series_id: self
                .series_col
                .clone()
                .or_else(|| default_series_col(header)),
            ..CsvSchema::new(&self.time_col, &self.target_col)
        })
    }
}

pub fn default_series_col(header: &[String]) -> Option<String> {
    header
        .iter()
        .any(|h| h == "series_id")
        .then(|| "series_id".to_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseKind {
    Ols,
    Lasso,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Maximum number of generated rules.
    #[arg(long, default_value_t = 5)]
    pub f_max: usize,
    #[arg(long, value_enum, default_value_t = BaseKind::Ols)]
    pub base: BaseKind,
    /// LASSO penalty: `auto` for cross-validation or a nonnegative number.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    /// Pruning strength relative to the root node's SSE.
    #[arg(long, default_value_t = 0.001)]
    pub eta: f64,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
    /// Minimum relative train-NRMSE drop for a rule to be kept.
    #[arg(long, default_value_t = 0.0)]
    pub min_improvement: f64,
    /// Columns in the first fit: `none`, `raw`, or a comma-separated list of names.
    #[arg(long, default_value = "none")]
    pub initial_features: String,
    /// Leave the raw covariates out of the final refit.
    #[arg(long)]
    pub no_raw_at_end: bool,
}

impl ModelArgs {
    pub fn config(&self) -> CliResult<EblrConfig> {
        let base_learner = match self.base {
            BaseKind::Ols => BaseLearner::Ols,
            BaseKind::Lasso => BaseLearner::Lasso(LassoConfig {
                lambda: parse_penalty(&self.lambda)?,
                cv_folds: self.cv_folds,
                ..LassoConfig::default()
            }),
        };
        let initial_features = match self.initial_features.trim() {
            "none" => InitialFeatures::None,
            "raw" => InitialFeatures::Raw,
            list => InitialFeatures::Named(
                list.split(',')
                    .map(|s| s.trim().to_owned())
                    .filter(|s| !s.is_empty())
                    .collect(),
            ),
        };
        let cfg = EblrConfig {
            base_learner,
            f_max: self.f_max,
            tree: TreeConfig {
                eta: self.eta,
                min_leaf: self.min_leaf,
                max_depth: self.max_depth,
            },
            initial_features,
            include_raw_at_end: !self.no_raw_at_end,
            min_relative_improvement: self.min_improvement,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_penalty(text: &str) -> CliResult<Penalty> {
    if text == "auto" {
        return Ok(Penalty::Auto);
    }
    match text.parse::<f64>() {
        Ok(l) if l.is_finite() && l >= 0.0 => Ok(Penalty::Fixed(l)),
        _ => Err(CliError::Validation(format!(
            "--lambda must be `auto` or a nonnegative number, got `{text}`"
        ))),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(short, long, env = "EBLR_MODEL", default_value = "model.json")]
    pub output: PathBuf,
    /// Learning curve CSV (`iteration,train_nrmse`).
    #[arg(long, env = "EBLR_CURVE", default_value = "learning_curve.csv")]
    pub curve: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long, env = "EBLR_MODEL", default_value = "model.json")]
    pub model: PathBuf,
    /// Future rows: series id (optional), timestamp and the model's covariates.
    #[arg(short, long, env = "EBLR_FUTURE", default_value = "future.csv")]
    pub input: PathBuf,
    #[arg(long)]
    pub series_col: Option<String>,
    #[arg(long, default_value = "timestamp")]
    pub time_col: String,
    /// Quantile levels in (0, 1).
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_QUANTILES.to_vec())]
    pub quantiles: Vec<f64>,
    #[arg(short, long, env = "EBLR_FORECAST", default_value = "forecast.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 25)]
    pub n_windows: usize,
    #[arg(long, default_value_t = 14)]
    pub horizon: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_QUANTILES.to_vec())]
    pub quantiles: Vec<f64>,
    #[arg(long, env = "EBLR_REPORT_JSON", default_value = "report.json")]
    pub json_out: PathBuf,
    /// Long-format report (`window,horizon,metric,value`).
    #[arg(long, env = "EBLR_REPORT_CSV", default_value = "report.csv")]
    pub csv_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, env = "EBLR_MODEL", default_value = "model.json")]
    pub model: PathBuf,
    /// Number of importance rows to keep.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Rule report; plain text when the extension is `.txt`, JSON otherwise.
    #[arg(long, env = "EBLR_RULE_REPORT", default_value = "rule_report.json")]
    pub report: PathBuf,
    /// Importance CSV (`name,score`).
    #[arg(long, env = "EBLR_IMPORTANCE", default_value = "importance.csv")]
    pub importance: PathBuf,
}

/// Sorted, validated quantile levels.
pub fn quantile_levels(raw: &[f64]) -> CliResult<Vec<f64>> {
    if raw.is_empty() {
        return Err(CliError::Validation(
            "at least one quantile level is required".into(),
        ));
    }
    if let Some(q) = raw.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(CliError::Validation(format!(
            "quantile level {q} is outside (0, 1)"
        )));
    }
    let mut levels = raw.to_vec();
    levels.sort_by(f64::total_cmp);
    let names: Vec<String> = levels.iter().map(|&q| quantile_column(q)).collect();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::Validation(format!(
            "quantile column {} is requested twice",
            w[0]
        )));
    }
    Ok(levels)
}

/// Column name for a quantile level: 0.05 -> q05, 0.5 -> q50, 0.975 -> q97.5.
pub fn quantile_column(rho: f64) -> String {
    let pct = (rho * 1e6).round() / 1e4;
    if pct.fract() == 0.0 {
        format!("q{:02}", pct as u32)
    } else {
        format!("q{pct}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_names() {
        let names: Vec<String> = DEFAULT_QUANTILES
            .iter()
            .map(|&q| quantile_column(q))
            .collect();
        assert_eq!(names, ["q05", "q25", "q50", "q75", "q95"]);
        assert_eq!(quantile_column(0.975), "q97.5");
        assert_eq!(quantile_column(0.01), "q01");
    }

    #[test]
    fn quantile_validation() {
        assert_eq!(quantile_levels(&[0.9, 0.1]).unwrap(), vec![0.1, 0.9]);
        assert!(quantile_levels(&[]).is_err());
        assert!(quantile_levels(&[0.0]).is_err());
        assert!(quantile_levels(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn penalties() {
        assert_eq!(parse_penalty("auto").unwrap(), Penalty::Auto);
        assert_eq!(parse_penalty("0.5").unwrap(), Penalty::Fixed(0.5));
        assert!(parse_penalty("-1").is_err());
        assert!(parse_penalty("x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        RunConfig::command().debug_assert();
    }
}
