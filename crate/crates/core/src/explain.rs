//! Interpretability outputs: importance scores over raw covariates, a per-rule report and
//! the training learning curve.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::eblr::EblrModel;
use crate::error::{EblrError, Result};

/// Covariate scores sorted by descending score, then name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceScores {
    pub scores: Vec<(String, f64)>,
}

impl ImportanceScores {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.scores.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W, top: Option<usize>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["name", "score"])?;
        for (name, score) in self.scores.iter().take(top.unwrap_or(usize::MAX)) {
            w.write_record([name.clone(), score.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_log(m: &EblrModel) -> Result<()> {
    if m.iteration_log.len() != m.rules.len() {
        return Err(EblrError::ModelFormat(format!(
            "model has {} rules but {} iteration records",
            m.rules.len(),
            m.iteration_log.len()
        )));
    }
    Ok(())
}

/// Each rule's clipped train-NRMSE reduction is credited in full to every covariate the
/// rule mentions; totals are then normalized to sum to one.
pub fn feature_importance(m: &EblrModel) -> Result<ImportanceScores> {
    check_log(m)?;
    let mut totals: Vec<(String, f64)> = Vec::new();
    let mut prev = m.base_train_nrmse;
    for (rule, rec) in m.rules.iter().zip(&m.iteration_log) {
        let delta = (prev - rec.train_nrmse).max(0.0);
        prev = rec.train_nrmse;
        for cov in rule.source_covariates() {
            match totals.iter_mut().find(|(n, _)| n == cov) {
                Some((_, t)) => *t += delta,
                None => totals.push((cov.to_owned(), delta)),
            }
        }
    }
    let sum: f64 = totals.iter().map(|(_, t)| t).sum();
    if sum > 0.0 {
        for (_, t) in &mut totals {
            *t /= sum;
        }
    }
    totals.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ImportanceScores { scores: totals })
}

/// `(iteration, train NRMSE)`; iteration 0 is the fit before any rule.
pub fn learning_curve(m: &EblrModel) -> Vec<(usize, f64)> {
    std::iter::once((0, m.base_train_nrmse))
        .chain(m.iteration_log.iter().map(|r| (r.iteration, r.train_nrmse)))
        .collect()
}

pub fn write_learning_curve_csv<W: Write>(m: &EblrModel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "train_nrmse"])?;
    for (k, e) in learning_curve(m) {
        w.write_record([k.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Increases,
    Decreases,
    None,
}

impl Effect {
    fn of(coefficient: f64) -> Self {
        if coefficient > 0.0 {
            Effect::Increases
        } else if coefficient < 0.0 {
            Effect::Decreases
        } else {
            Effect::None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleReportEntry {
    pub iteration: usize,
    pub rule: String,
    pub leaf_mean: f64,
    pub leaf_share: f64,
    /// Final-model coefficient of the rule's 0/1 column.
    pub coefficient: f64,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientEntry {
    pub column: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleReport {
    pub intercept: f64,
    pub rules: Vec<RuleReportEntry>,
    /// Final-model coefficients of every column that is not a generated rule.
    pub raw_coefficients: Vec<CoefficientEntry>,
    pub learning_curve: Vec<(usize, f64)>,
    pub stop_reason: crate::eblr::StopReason,
}

pub fn rule_report(m: &EblrModel) -> RuleReport {
    let lm = &m.final_model;
    let rules: Vec<RuleReportEntry> = m
        .rules
        .iter()
        .map(|r| {
            let rule = r.canonical();
            let coefficient = lm.coefficient(&rule).unwrap_or(0.0);
            RuleReportEntry {
                iteration: r.source_iteration,
                leaf_mean: r.leaf_mean,
                leaf_share: r.leaf_share,
                coefficient,
                effect: Effect::of(coefficient),
                rule,
            }
        })
        .collect();
    let raw_coefficients = lm
        .column_names
        .iter()
        .zip(&lm.coefficients)
        .filter(|(name, _)| !rules.iter().any(|r| &r.rule == *name))
        .map(|(column, &coefficient)| CoefficientEntry { column: column.clone(), coefficient })
        .collect();
    RuleReport {
        intercept: lm.intercept,
        rules,
        raw_coefficients,
        learning_curve: learning_curve(m),
        stop_reason: m.stop_reason,
    }
}

impl RuleReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "intercept: {}", self.intercept);
        if self.rules.is_empty() {
            out.push_str("no rules generated\n");
        }
        for r in &self.rules {
            let verb = match r.effect {
                Effect::Increases => "raises",
                Effect::Decreases => "lowers",
                Effect::None => "does not change",
            };
            let _ = writeln!(
                out,
                "[{}] {}\n    coefficient {} ({verb} the forecast), leaf mean {}, covers {:.1}% of training rows",
                r.iteration,
                r.rule,
                r.coefficient,
                r.leaf_mean,
                100.0 * r.leaf_share
            );
        }
        if !self.raw_coefficients.is_empty() {
            out.push_str("raw coefficients:\n");
            for c in &self.raw_coefficients {
                let _ = writeln!(out, "    {} {}", c.column, c.coefficient);
            }
        }
        out.push_str("learning curve (iteration, train NRMSE):\n");
        for (k, e) in &self.learning_curve {
            let _ = writeln!(out, "    {k} {e}");
        }
        out
    }
}
