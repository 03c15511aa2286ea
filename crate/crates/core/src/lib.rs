//! Explainable boosted linear regression for panel time series.
//!
//! A linear base learner is fitted, a regression tree is grown on its residuals, and the
//! tree leaf with the largest absolute mean residual becomes a new binary rule feature.
//! Repeating this produces a small set of readable interaction rules on top of a
//! linear model. Quantile forecasts come from empirical quantiles of the training
//! residuals.

pub mod data;
pub mod eblr;
pub mod error;
pub mod eval;
pub mod explain;
pub mod linear;
pub mod prob;
pub mod tree;

pub use eblr::{
    fit_eblr, fit_without_rules, load_model, predict_point, save_model, BaseLearner, EblrConfig, EblrModel,
    InitialFeatures, IterationRecord, PointForecast, StopReason,
};
pub use error::{EblrError, Result};
pub use eval::{backtest, backtest_with, nd, nrmse, wspl, BacktestReport};
pub use explain::{feature_importance, learning_curve, rule_report, ImportanceScores, RuleReport};
pub use linear::{fit_lasso, fit_ols, LassoConfig, LinearModel, Penalty};
pub use prob::{predict_quantiles, prediction_interval, residual_quantile, ForecastDistribution, ResidualQuantiles, DEFAULT_QUANTILES};
pub use tree::{apply_rule, fit_tree, prune, select_worst_leaf, tree_predict, RegressionTree, RuleFeature, TreeConfig};
