//! The boosting loop: fit the base learner, grow a tree on its residuals, turn the leaf
//! with the largest absolute mean into a binary rule column, and repeat.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{vertical_matrix, vertical_matrix_for_schema, ColumnInfo, Covariate, PanelDataset, TimeKey, VerticalMatrix};
use crate::error::{EblrError, Result};
use crate::eval::nrmse;
use crate::linear::{fit_lasso, fit_ols, ColumnScale, LassoConfig, LinearModel};
use crate::tree::{apply_rule, fit_tree, select_worst_leaf, RuleFeature, TreeConfig};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLearner {
    Ols,
    Lasso(LassoConfig),
}

impl BaseLearner {
    pub fn fit(&self, m: &VerticalMatrix) -> Result<LinearModel> {
        match self {
            BaseLearner::Ols => fit_ols(m),
            BaseLearner::Lasso(cfg) => fit_lasso(m, cfg),
        }
    }
}

/// Columns the linear model sees before any rule is generated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialFeatures {
    /// Intercept only.
    #[default]
    None,
    Raw,
    /// Matrix columns or covariates (a categorical name selects all its indicator columns).
    Named(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EblrConfig {
    pub base_learner: BaseLearner,
    pub f_max: usize,
    pub tree: TreeConfig,
    pub initial_features: InitialFeatures,
    pub include_raw_at_end: bool,
    /// A new rule is kept only if it lowers train NRMSE by at least this fraction.
    pub min_relative_improvement: f64,
}

impl Default for EblrConfig {
    fn default() -> Self {
        EblrConfig {
            base_learner: BaseLearner::Ols,
            f_max: 5,
            tree: TreeConfig::default(),
            initial_features: InitialFeatures::None,
            include_raw_at_end: true,
            min_relative_improvement: 0.0,
        }
    }
}

impl EblrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.f_max == 0 {
            return Err(EblrError::Config("f_max must be at least 1".into()));
        }
        if !(self.min_relative_improvement.is_finite() && self.min_relative_improvement >= 0.0) {
            return Err(EblrError::Config("min_relative_improvement must be a nonnegative real".into()));
        }
        if let BaseLearner::Lasso(cfg) = &self.base_learner {
            cfg.validate()?;
        }
        self.tree.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxFeatures,
    NoSplit,
    DuplicateRule,
    NoImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_nrmse: f64,
    pub rule: String,
    pub leaf_mean: f64,
    pub leaf_share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EblrModel {
    pub config: EblrConfig,
    pub schema: Vec<Covariate>,
    pub rules: Vec<RuleFeature>,
    pub final_model: LinearModel,
    /// One record per kept rule.
    pub iteration_log: Vec<IterationRecord>,
    /// Train NRMSE of the base learner before any rule was added.
    pub base_train_nrmse: f64,
    pub final_train_nrmse: f64,
    pub stop_reason: StopReason,
    /// Training targets minus final-model fits, pooled over all series.
    pub training_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointForecast {
    pub series_id: String,
    pub timestamp: TimeKey,
    pub point: f64,
}

fn initial_matrix(raw: &VerticalMatrix, init: &InitialFeatures) -> Result<VerticalMatrix> {
    match init {
        InitialFeatures::None => Ok(raw.without_columns()),
        InitialFeatures::Raw => Ok(raw.clone()),
        InitialFeatures::Named(names) => {
            let mut selected: Vec<&str> = Vec::new();
            for name in names {
                if raw.column_index(name).is_some() {
                    selected.push(name);
                    continue;
                }
                let from_source: Vec<&str> =
                    raw.columns().iter().filter(|c| &c.source == name).map(|c| c.name.as_str()).collect();
                if from_source.is_empty() {
                    return Err(EblrError::MissingColumn(name.clone()));
                }
                selected.extend(from_source);
            }
            selected.dedup();
            raw.select(&selected)
        }
    }
}

fn residuals(y: &[f64], fitted: &[f64]) -> Vec<f64> {
    y.iter().zip(fitted).map(|(a, b)| a - b).collect()
}

/// Appends every column of `extra` not already present by name.
fn union_columns(m: &mut VerticalMatrix, extra: &VerticalMatrix) -> Result<()> {
    for (j, info) in extra.columns().iter().enumerate() {
        if m.column_index(&info.name).is_none() {
            m.push_column(info.clone(), extra.column_at(j).to_vec())?;
        }
    }
    Ok(())
}

pub fn fit_eblr(train: &PanelDataset, cfg: &EblrConfig) -> Result<EblrModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(EblrError::Fit("training dataset is empty".into()));
    }
    if !train.targets_known() {
        return Err(EblrError::Fit("training dataset has no target values".into()));
    }
    let raw = vertical_matrix(train);
    let y = raw.target().to_vec();
    let mut design = initial_matrix(&raw, &cfg.initial_features)?;
    let mut model = cfg.base_learner.fit(&design)?;
    let mut fitted = model.predict(&design)?;
    let base_train_nrmse = nrmse(&y, &fitted)?;
    let mut current = base_train_nrmse;

    let mut rules: Vec<RuleFeature> = Vec::new();
    let mut log = Vec::new();
    let mut stop_reason = StopReason::MaxFeatures;
    for iteration in 1..=cfg.f_max {
        let e = residuals(&y, &fitted);
        let tree = fit_tree(&raw, &e, &cfg.tree)?;
        let Some(rule) = select_worst_leaf(&tree, iteration) else {
            stop_reason = StopReason::NoSplit;
            break;
        };
        let name = rule.canonical();
        if design.column_index(&name).is_some() {
            stop_reason = StopReason::DuplicateRule;
            break;
        }
        let column = apply_rule(&rule, &raw)?;
        let mut candidate = design.clone();
        candidate.push_column(ColumnInfo::binary(&name), column)?;
        let next_model = cfg.base_learner.fit(&candidate)?;
        let next_fitted = next_model.predict(&candidate)?;
        let next = nrmse(&y, &next_fitted)?;
        let allowed = current * (1.0 - cfg.min_relative_improvement) + 1e-12 * current;
        if next > allowed {
            stop_reason = StopReason::NoImprovement;
            break;
        }
        log.push(IterationRecord {
            iteration,
            train_nrmse: next,
            rule: name,
            leaf_mean: rule.leaf_mean,
            leaf_share: rule.leaf_share,
        });
        rules.push(rule);
        design = candidate;
        model = next_model;
        fitted = next_fitted;
        current = next;
    }

    if cfg.include_raw_at_end {
        union_columns(&mut design, &raw)?;
        model = cfg.base_learner.fit(&design)?;
        fitted = model.predict(&design)?;
    }
    let final_train_nrmse = nrmse(&y, &fitted)?;
    Ok(EblrModel {
        config: cfg.clone(),
        schema: train.schema().to_vec(),
        rules,
        final_model: model,
        iteration_log: log,
        base_train_nrmse,
        final_train_nrmse,
        stop_reason,
        training_residuals: residuals(&y, &fitted),
    })
}

/// The base learner on its initial features (plus the raw columns when
/// `include_raw_at_end` is set) with no generated rules.
pub fn fit_without_rules(train: &PanelDataset, cfg: &EblrConfig) -> Result<EblrModel> {
    let cfg = EblrConfig { f_max: cfg.f_max.max(1), ..cfg.clone() };
    cfg.validate()?;
    if train.is_empty() || !train.targets_known() {
        return Err(EblrError::Fit("training dataset is empty or has no targets".into()));
    }
    let raw = vertical_matrix(train);
    let y = raw.target().to_vec();
    let mut design = initial_matrix(&raw, &cfg.initial_features)?;
    if cfg.include_raw_at_end {
        union_columns(&mut design, &raw)?;
    }
    let model = cfg.base_learner.fit(&design)?;
    let fitted = model.predict(&design)?;
    let train_nrmse = nrmse(&y, &fitted)?;
    Ok(EblrModel {
        config: cfg,
        schema: train.schema().to_vec(),
        rules: Vec::new(),
        final_model: model,
        iteration_log: Vec::new(),
        base_train_nrmse: train_nrmse,
        final_train_nrmse: train_nrmse,
        stop_reason: StopReason::MaxFeatures,
        training_residuals: residuals(&y, &fitted),
    })
}

impl EblrModel {
    /// Raw columns of `ds` under the training schema, plus one column per rule.
    pub fn design_matrix(&self, ds: &PanelDataset) -> Result<VerticalMatrix> {
        let raw = vertical_matrix_for_schema(ds, &self.schema)?;
        let mut m = raw.clone();
        for rule in &self.rules {
            let name = rule.canonical();
            if m.column_index(&name).is_none() {
                m.push_column(ColumnInfo::binary(&name), apply_rule(rule, &raw)?)?;
            }
        }
        Ok(m)
    }

    /// Point forecasts in row order of `ds` (series id, then time).
    pub fn predict_values(&self, ds: &PanelDataset) -> Result<Vec<f64>> {
        self.final_model.predict(&self.design_matrix(ds)?)
    }

    pub fn predict_point(&self, future: &PanelDataset) -> Result<Vec<PointForecast>> {
        let values = self.predict_values(future)?;
        Ok(future
            .row_keys()
            .into_iter()
            .zip(values)
            .map(|((series_id, timestamp), point)| PointForecast { series_id, timestamp, point })
            .collect())
    }
}

pub fn predict_point(model: &EblrModel, future: &PanelDataset) -> Result<Vec<PointForecast>> {
    model.predict_point(future)
}

#[derive(Serialize, Deserialize)]
struct RuleEntry {
    rule: String,
    #[serde(default)]
    source_iteration: usize,
    #[serde(default)]
    leaf_mean: f64,
    #[serde(default)]
    leaf_share: f64,
}

#[derive(Serialize, Deserialize)]
struct CoefficientEntry {
    column: String,
    coefficient: f64,
    #[serde(default)]
    mean: f64,
    #[serde(default = "one")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct LinearEntry {
    intercept: f64,
    #[serde(default)]
    coefficients: Vec<CoefficientEntry>,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    warnings: Vec<String>,
}

fn default_stop() -> StopReason {
    StopReason::MaxFeatures
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    #[serde(default)]
    config: EblrConfig,
    #[serde(default)]
    covariate_schema: Vec<Covariate>,
    #[serde(default)]
    rules: Vec<RuleEntry>,
    final_model: LinearEntry,
    #[serde(default)]
    iteration_log: Vec<IterationRecord>,
    #[serde(default)]
    base_train_nrmse: f64,
    #[serde(default)]
    final_train_nrmse: f64,
    #[serde(default = "default_stop")]
    stop_reason: StopReason,
    #[serde(default)]
    training_residuals: Vec<f64>,
}

impl From<&EblrModel> for ModelFile {
    fn from(m: &EblrModel) -> Self {
        let lm = &m.final_model;
        ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            config: m.config.clone(),
            covariate_schema: m.schema.clone(),
            rules: m
                .rules
                .iter()
                .map(|r| RuleEntry {
                    rule: r.canonical(),
                    source_iteration: r.source_iteration,
                    leaf_mean: r.leaf_mean,
                    leaf_share: r.leaf_share,
                })
                .collect(),
            final_model: LinearEntry {
                intercept: lm.intercept,
                coefficients: lm
                    .column_names
                    .iter()
                    .zip(&lm.coefficients)
                    .zip(&lm.standardization)
                    .map(|((column, &coefficient), s)| CoefficientEntry {
                        column: column.clone(),
                        coefficient,
                        mean: s.mean,
                        scale: s.scale,
                    })
                    .collect(),
                lambda: lm.lambda,
                warnings: lm.warnings.clone(),
            },
            iteration_log: m.iteration_log.clone(),
            base_train_nrmse: m.base_train_nrmse,
            final_train_nrmse: m.final_train_nrmse,
            stop_reason: m.stop_reason,
            training_residuals: m.training_residuals.clone(),
        }
    }
}

impl TryFrom<ModelFile> for EblrModel {
    type Error = EblrError;

    fn try_from(f: ModelFile) -> Result<Self> {
        let rules = f
            .rules
            .into_iter()
            .map(|e| {
                let parsed = RuleFeature::parse(&e.rule).map_err(|err| EblrError::ModelFormat(err.to_string()))?;
                if parsed.canonical() != e.rule {
                    return Err(EblrError::ModelFormat(format!("rule `{}` is not in canonical form", e.rule)));
                }
                Ok(RuleFeature { source_iteration: e.source_iteration, leaf_mean: e.leaf_mean, leaf_share: e.leaf_share, ..parsed })
            })
            .collect::<Result<Vec<_>>>()?;
        let lm = f.final_model;
        let final_model = LinearModel {
            intercept: lm.intercept,
            column_names: lm.coefficients.iter().map(|c| c.column.clone()).collect(),
            coefficients: lm.coefficients.iter().map(|c| c.coefficient).collect(),
            standardization: lm.coefficients.iter().map(|c| ColumnScale { mean: c.mean, scale: c.scale }).collect(),
            lambda: lm.lambda,
            warnings: lm.warnings,
        };
        Ok(EblrModel {
            config: f.config,
            schema: f.covariate_schema,
            rules,
            final_model,
            iteration_log: f.iteration_log,
            base_train_nrmse: f.base_train_nrmse,
            final_train_nrmse: f.final_train_nrmse,
            stop_reason: f.stop_reason,
            training_residuals: f.training_residuals,
        })
    }
}

impl EblrModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| EblrError::ModelFormat(e.to_string()))?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| EblrError::ModelFormat("missing schema_version".into()))?;
        if version != u64::from(MODEL_SCHEMA_VERSION) {
            return Err(EblrError::UnsupportedVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| EblrError::ModelFormat(e.to_string()))?;
        EblrModel::try_from(file)
    }
}

pub fn save_model(model: &EblrModel, path: impl AsRef<Path>) -> Result<()> {
    let mut text = model.to_json()?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EblrModel> {
    EblrModel::from_json(&fs::read_to_string(path)?)
}
