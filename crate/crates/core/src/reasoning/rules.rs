//! Threshold rules (if-then) over the latest value of each quantity.
//!
//! Rules file layout (JSON array):
//!
//! ```json
//! [
//!   {
//!     "action": "irrigate",
//!     "quantity": "soil_moisture",
//!     "comparator": "lt",
//!     "bound": 30.0,
//!     "condition": "Soil moisture less than 30%",
//!     "explanation": "Soil moisture is {value}%"
//!   },
//!   {
//!     "action": "adjust_ph",
//!     "quantity": "ph",
//!     "comparator": "outside_range",
//!     "bound": [6.0, 7.5],
//!     "condition": "Soil pH out of range (6.0-7.5)",
//!     "explanation": "Soil pH is {value}"
//!   }
//! ]
//! ```
//!
//! `lt` and `gt` are strict. `outside_range` fires only strictly outside the
//! inclusive range `[lo, hi]`. `{value}` is replaced by the measured value
//! with two decimals.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_config_file, ConfigError};
use crate::interop::Ontology;
use crate::model::{format_measurement, ActionId, Confidence, ReasonerKind, Recommendation};

pub const VALUE_PLACEHOLDER: &str = "{value}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Lt,
    Gt,
    OutsideRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Value(f64),
    Range([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRule {
    pub action: ActionId,
    pub quantity: String,
    pub comparator: Comparator,
    pub bound: Bound,
    pub condition: String,
    pub explanation: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    action: ActionId,
    quantity: String,
    comparator: Comparator,
    bound: Bound,
    condition: String,
    explanation: String,
}

impl ThresholdRule {
    fn check(raw: RawRule) -> Result<Self, String> {
        match (raw.comparator, raw.bound) {
            (Comparator::Lt | Comparator::Gt, Bound::Value(v)) if v.is_finite() => {}
            (Comparator::OutsideRange, Bound::Range([lo, hi]))
                if lo.is_finite() && hi.is_finite() && lo < hi => {}
            (Comparator::OutsideRange, Bound::Range(_)) => {
                return Err("outside_range needs lo < hi".into())
            }
            _ => return Err("bound does not fit the comparator".into()),
        }
        if raw.condition.trim().is_empty() {
            return Err("empty condition".into());
        }
        Ok(Self {
            action: raw.action,
            quantity: raw.quantity,
            comparator: raw.comparator,
            bound: raw.bound,
            condition: raw.condition,
            explanation: raw.explanation,
        })
    }

    /// Whether the comparator is literally true of `value`.
    pub fn fires(&self, value: f64) -> bool {
        match (self.comparator, self.bound) {
            (Comparator::Lt, Bound::Value(b)) => value < b,
            (Comparator::Gt, Bound::Value(b)) => value > b,
            (Comparator::OutsideRange, Bound::Range([lo, hi])) => value < lo || value > hi,
            _ => false,
        }
    }

    pub fn explain(&self, value: f64) -> String {
        let text = self
            .explanation
            .replace(VALUE_PLACEHOLDER, &format_measurement(value));
        format!("{}: {}", self.condition, text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleSet {
    rules: Vec<ThresholdRule>,
}

const BUNDLED: &str = include_str!("../../data/rules.json");

impl RuleSet {
    pub fn bundled(ontology: &Ontology) -> Self {
        Self::from_json(BUNDLED, ontology).expect("bundled rules are valid")
    }

    pub fn load(path: &Path, ontology: &Ontology) -> Result<Self, ConfigError> {
        Self::from_json(&read_config_file(path)?, ontology)
    }

    /// Parses and checks every rule; quantities must exist in `ontology`.
    pub fn from_json(text: &str, ontology: &Ontology) -> Result<Self, ConfigError> {
        let raw: Vec<RawRule> =
            serde_json::from_str(text).map_err(|e| ConfigError::parse("rules", e))?;
        let mut rules = Vec::with_capacity(raw.len());
        for (i, r) in raw.into_iter().enumerate() {
            if ontology.quantity(&r.quantity).is_none() {
                return Err(ConfigError::invalid(
                    "rules",
                    format!("rule {i}: unknown quantity {:?}", r.quantity),
                ));
            }
            let rule = ThresholdRule::check(r)
                .map_err(|reason| ConfigError::invalid("rules", format!("rule {i}: {reason}")))?;
            rules.push(rule);
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[ThresholdRule] {
        &self.rules
    }
}

/// One confidence-1 recommendation per rule whose quantity is present and
/// whose comparator holds, in rule order.
pub fn evaluate_rules(readings: &BTreeMap<String, f64>, rules: &RuleSet) -> Vec<Recommendation> {
    rules
        .rules
        .iter()
        .filter_map(|rule| {
            let value = *readings.get(&rule.quantity)?;
            rule.fires(value).then(|| {
                Recommendation::new(
                    rule.action,
                    rule.condition.clone(),
                    rule.explain(value),
                    Confidence::CERTAIN,
                    ReasonerKind::Rule,
                )
            })
        })
        .collect()
}
