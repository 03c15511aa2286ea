use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::data::{one_hot_name, VerticalMatrix};
use crate::error::{EblrError, Result};

/// Listed in canonical sort order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Le,
    Gt,
    Eq,
    Ne,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Eq => "=",
            Relation::Ne => "!=",
        }
    }

    fn is_threshold(self) -> bool {
        matches!(self, Relation::Le | Relation::Gt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionValue {
    Threshold(f64),
    Level(String),
}

impl fmt::Display for ConditionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionValue::Threshold(v) => write!(f, "{v}"),
            ConditionValue::Level(l) => f.write_str(l),
        }
    }
}

/// One clause of a rule. `Le`/`Gt` carry thresholds, `Eq`/`Ne` carry levels; `column`
/// is the covariate name (the categorical source for one-hot splits).
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub column: String,
    pub relation: Relation,
    pub value: ConditionValue,
}

impl Condition {
    pub fn le(column: impl Into<String>, threshold: f64) -> Self {
        Condition { column: column.into(), relation: Relation::Le, value: ConditionValue::Threshold(threshold) }
    }

    pub fn gt(column: impl Into<String>, threshold: f64) -> Self {
        Condition { column: column.into(), relation: Relation::Gt, value: ConditionValue::Threshold(threshold) }
    }

    pub fn eq(column: impl Into<String>, level: impl Into<String>) -> Self {
        Condition { column: column.into(), relation: Relation::Eq, value: ConditionValue::Level(level.into()) }
    }

    pub fn ne(column: impl Into<String>, level: impl Into<String>) -> Self {
        Condition { column: column.into(), relation: Relation::Ne, value: ConditionValue::Level(level.into()) }
    }

    fn threshold(&self) -> f64 {
        match self.value {
            ConditionValue::Threshold(v) => v,
            ConditionValue::Level(_) => f64::NAN,
        }
    }

    fn canonical_cmp(&self, other: &Condition) -> Ordering {
        self.column
            .cmp(&other.column)
            .then(self.relation.cmp(&other.relation))
            .then_with(|| match (&self.value, &other.value) {
                (ConditionValue::Threshold(a), ConditionValue::Threshold(b)) => a.total_cmp(b),
                (a, b) => a.to_string().cmp(&b.to_string()),
            })
    }

    /// Indicator of the condition on every row of `m`.
    fn evaluate(&self, m: &VerticalMatrix) -> Result<Vec<bool>> {
        let missing = || EblrError::Rule(format!("rule refers to missing column `{}`", self.column));
        match (&self.relation, &self.value) {
            (Relation::Le, ConditionValue::Threshold(t)) => {
                Ok(m.column(&self.column).ok_or_else(missing)?.iter().map(|x| x <= t).collect())
            }
            (Relation::Gt, ConditionValue::Threshold(t)) => {
                Ok(m.column(&self.column).ok_or_else(missing)?.iter().map(|x| x > t).collect())
            }
            (rel, ConditionValue::Level(level)) => {
                let hit: Vec<bool> = if let Some(col) = m.column(&one_hot_name(&self.column, level)) {
                    col.iter().map(|x| *x == 1.0).collect()
                } else {
                    let col = m.column(&self.column).ok_or_else(missing)?;
                    let v: f64 = level
                        .parse()
                        .map_err(|_| EblrError::Rule(format!("no column for level `{level}` of `{}`", self.column)))?;
                    col.iter().map(|x| *x == v).collect()
                };
                Ok(if *rel == Relation::Eq { hit } else { hit.into_iter().map(|h| !h).collect() })
            }
            _ => Err(EblrError::Rule(format!("malformed condition on `{}`", self.column))),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.column, self.relation.symbol(), self.value)
    }
}

impl FromStr for Condition {
    type Err = EblrError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || EblrError::Rule(format!("cannot parse condition `{s}`"));
        let at = s.find(['<', '>', '=', '!']).ok_or_else(bad)?;
        let (column, rest) = s.split_at(at);
        if column.is_empty() {
            return Err(bad());
        }
        let (relation, value) = if let Some(v) = rest.strip_prefix("<=") {
            (Relation::Le, v)
        } else if let Some(v) = rest.strip_prefix("!=") {
            (Relation::Ne, v)
        } else if let Some(v) = rest.strip_prefix('>') {
            (Relation::Gt, v)
        } else if let Some(v) = rest.strip_prefix('=') {
            (Relation::Eq, v)
        } else {
            return Err(bad());
        };
        if value.is_empty() {
            return Err(bad());
        }
        let value = if relation.is_threshold() {
            let t: f64 = value.parse().map_err(|_| bad())?;
            if !t.is_finite() {
                return Err(bad());
            }
            ConditionValue::Threshold(t)
        } else {
            ConditionValue::Level(value.to_owned())
        };
        Ok(Condition { column: column.to_owned(), relation, value })
    }
}

/// Merges redundant clauses and sorts into canonical order: the tightest upper and lower
/// bound per column survive, and an equality makes inequalities on the same column moot.
pub fn simplify(conditions: &[Condition]) -> Vec<Condition> {
    let mut out: Vec<Condition> = Vec::new();
    for c in conditions {
        let has_eq = conditions.iter().any(|o| o.column == c.column && o.relation == Relation::Eq);
        let keep = match c.relation {
            Relation::Le => !conditions
                .iter()
                .any(|o| o.column == c.column && o.relation == Relation::Le && o.threshold() < c.threshold()),
            Relation::Gt => !conditions
                .iter()
                .any(|o| o.column == c.column && o.relation == Relation::Gt && o.threshold() > c.threshold()),
            Relation::Ne => !has_eq,
            Relation::Eq => true,
        };
        if keep && !out.contains(c) {
            out.push(c.clone());
        }
    }
    out.sort_by(Condition::canonical_cmp);
    out
}

/// A generated feature: the indicator of one tree leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleFeature {
    pub conditions: Vec<Condition>,
    pub source_iteration: usize,
    pub leaf_mean: f64,
    pub leaf_share: f64,
}

impl RuleFeature {
    pub fn new(conditions: Vec<Condition>, source_iteration: usize, leaf_mean: f64, leaf_share: f64) -> Result<Self> {
        if conditions.is_empty() {
            return Err(EblrError::Rule("a rule needs at least one condition".into()));
        }
        Ok(RuleFeature { conditions: simplify(&conditions), source_iteration, leaf_mean, leaf_share })
    }

    /// Parses a canonical rule string; leaf statistics are left at zero.
    pub fn parse(text: &str) -> Result<Self> {
        let conditions = text.split(" & ").map(str::parse).collect::<Result<Vec<Condition>>>()?;
        RuleFeature::new(conditions, 0, 0.0, 0.0)
    }

    /// Canonical serialization, also used as the generated column name.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    /// Distinct covariates referenced, in canonical order.
    pub fn source_covariates(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.conditions {
            if !out.contains(&c.column.as_str()) {
                out.push(&c.column);
            }
        }
        out
    }
}

impl fmt::Display for RuleFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, c) in self.conditions.iter().enumerate() {
            if k > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Binary indicator column: 1.0 where every condition holds.
pub fn apply_rule(rule: &RuleFeature, m: &VerticalMatrix) -> Result<Vec<f64>> {
    let mut hits = vec![true; m.n_rows()];
    for c in &rule.conditions {
        for (h, v) in hits.iter_mut().zip(c.evaluate(m)?) {
            *h &= v;
        }
    }
    Ok(hits.into_iter().map(|h| if h { 1.0 } else { 0.0 }).collect())
}
