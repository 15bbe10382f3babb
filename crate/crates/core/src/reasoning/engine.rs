//! Runs every reasoner over the current farm state and aggregates.
//!
//! Fuzzy variables file layout (JSON object):
//!
//! ```json
//! {
//!   "variables": [
//!     {
//!       "quantity": "soil_moisture",
//!       "sets": [
//!         { "label": "Low", "shape": [0, 0, 30] },
//!         { "label": "Adequate", "shape": [20, 50, 80] },
//!         { "label": "High", "shape": [60, 100, 100] }
//!       ],
//!       "actions": { "Low": "irrigate" }
//!     }
//!   ]
//! }
//! ```
//!
//! The `soil_moisture` variable also drives evidence fusion and the
//! Bayesian network: its memberships become per-sensor belief masses and
//! soft evidence on the SoilMoisture node.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::aggregate::aggregate;
use super::bayes::{BayesNet, BnEvidence, Moisture, Node};
use super::cases::{cbr_retrieve, CaseBase};
use super::evidence::{combine_all, Bba, FocalSet};
use super::fuzzy::{argmax_by_center, fuzzy_classify, FuzzyLabel, FuzzySet};
use super::rules::{evaluate_rules, RuleSet};
use crate::error::{read_config_file, ConfigError};
use crate::interop::Ontology;
use crate::model::{ActionId, CanonicalRecord, Confidence, ReasonerKind, Recommendation, SensorId};

/// Quantity whose fuzzy variable feeds evidence fusion and the network.
pub const MOISTURE_QUANTITY: &str = "soil_moisture";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyVariable {
    pub quantity: String,
    pub sets: Vec<FuzzySet>,
    #[serde(default)]
    pub actions: BTreeMap<FuzzyLabel, ActionId>,
}

impl FuzzyVariable {
    pub fn set(&self, label: FuzzyLabel) -> Option<&FuzzySet> {
        self.sets.iter().find(|s| s.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyConfig {
    pub variables: Vec<FuzzyVariable>,
}

const BUNDLED_FUZZY: &str = include_str!("../../data/fuzzy.json");

impl FuzzyConfig {
    pub fn bundled(ontology: &Ontology) -> Self {
        Self::from_json(BUNDLED_FUZZY, ontology).expect("bundled fuzzy variables are valid")
    }

    pub fn load(path: &Path, ontology: &Ontology) -> Result<Self, ConfigError> {
        Self::from_json(&read_config_file(path)?, ontology)
    }

    pub fn from_json(text: &str, ontology: &Ontology) -> Result<Self, ConfigError> {
        let config: FuzzyConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::parse("fuzzy variables", e))?;
        let invalid = |r: String| ConfigError::invalid("fuzzy variables", r);
        let mut seen = Vec::new();
        for v in &config.variables {
            if ontology.quantity(&v.quantity).is_none() {
                return Err(invalid(format!("unknown quantity {:?}", v.quantity)));
            }
            if seen.contains(&&v.quantity) {
                return Err(invalid(format!("{} defined twice", v.quantity)));
            }
            seen.push(&v.quantity);
            if v.sets.is_empty() {
                return Err(invalid(format!("{} has no sets", v.quantity)));
            }
            for (i, s) in v.sets.iter().enumerate() {
                if v.sets[..i].iter().any(|o| o.label == s.label) {
                    return Err(invalid(format!(
                        "{}: label {} repeated",
                        v.quantity, s.label
                    )));
                }
            }
            if let Some(l) = v.actions.keys().find(|l| v.set(**l).is_none()) {
                return Err(invalid(format!(
                    "{}: action for undefined label {l}",
                    v.quantity
                )));
            }
        }
        Ok(config)
    }

    pub fn variable(&self, quantity: &str) -> Option<&FuzzyVariable> {
        self.variables.iter().find(|v| v.quantity == quantity)
    }
}

/// Everything the reasoners consult; immutable apart from case appends.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub ontology: Arc<Ontology>,
    pub rules: RuleSet,
    pub fuzzy: FuzzyConfig,
    pub bayes: BayesNet,
    pub cases: Arc<CaseBase>,
}

impl KnowledgeBase {
    /// The files shipped with the crate.
    pub fn bundled() -> Self {
        let ontology = Arc::new(Ontology::bundled());
        Self {
            rules: RuleSet::bundled(&ontology),
            fuzzy: FuzzyConfig::bundled(&ontology),
            bayes: BayesNet::bundled(),
            cases: Arc::new(CaseBase::bundled(&ontology)),
            ontology,
        }
    }
}

/// Latest record per sensor.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    latest: BTreeMap<SensorId, CanonicalRecord>,
}

impl Snapshot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a CanonicalRecord>) -> Self {
        let mut s = Self::new();
        for r in records {
            s.update(r.clone());
        }
        s
    }

    /// Keeps `record` if it is at least as recent as what the sensor had.
    pub fn update(&mut self, record: CanonicalRecord) {
        match self.latest.get(record.sensor_id()) {
            Some(prev) if prev.timestamp() > record.timestamp() => {}
            _ => {
                self.latest.insert(record.sensor_id().clone(), record);
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &CanonicalRecord> {
        self.latest.values()
    }

    pub fn of_quantity<'a>(
        &'a self,
        quantity: &'a str,
    ) -> impl Iterator<Item = &'a CanonicalRecord> {
        self.records().filter(move |r| r.quantity() == quantity)
    }

    /// Per quantity, the value of its most recent record.
    pub fn values(&self) -> BTreeMap<String, f64> {
        let mut newest: BTreeMap<&str, &CanonicalRecord> = BTreeMap::new();
        for r in self.records() {
            match newest.get(r.quantity()) {
                Some(prev) if prev.timestamp() >= r.timestamp() => {}
                _ => {
                    newest.insert(r.quantity(), r);
                }
            }
        }
        newest
            .into_iter()
            .map(|(q, r)| (q.to_string(), r.value()))
            .collect()
    }
}

/// Raw per-reasoner output alongside the aggregated list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inference {
    pub recommendations: Vec<Recommendation>,
    pub contributions: Vec<Recommendation>,
}

#[derive(Debug, Clone)]
pub struct Reasoner {
    kb: KnowledgeBase,
    bn_context: BnEvidence,
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

impl Reasoner {
    pub fn new(kb: KnowledgeBase) -> Self {
        Self {
            kb,
            bn_context: BnEvidence::default(),
        }
    }

    /// Known weather or irrigation state to condition the network on.
    pub fn with_context(mut self, context: BnEvidence) -> Self {
        self.bn_context = BnEvidence {
            soil_moisture: None,
            ..context
        };
        self
    }

    pub fn knowledge(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn infer(&self, snapshot: &Snapshot) -> Inference {
        let values = snapshot.values();
        let mut contributions = evaluate_rules(&values, &self.kb.rules);
        contributions.extend(self.fuzzy(&values));
        contributions.extend(self.dempster_shafer(snapshot, &values));
        contributions.extend(self.bayesian(&values));
        contributions.extend(self.case_based(&values));
        Inference {
            recommendations: aggregate(&contributions),
            contributions,
        }
    }

    fn describe(&self, quantity: &str, value: f64) -> String {
        match self.kb.ontology.quantity(quantity) {
            Some(def) => def.describe(quantity, value),
            None => format!("{quantity} is {}", crate::model::format_measurement(value)),
        }
    }

    fn display_name<'a>(&'a self, quantity: &'a str) -> &'a str {
        self.kb
            .ontology
            .quantity(quantity)
            .and_then(|d| d.display_name.as_deref())
            .unwrap_or(quantity)
    }

    fn fuzzy(&self, values: &BTreeMap<String, f64>) -> Vec<Recommendation> {
        let mut out = Vec::new();
        for var in &self.kb.fuzzy.variables {
            let Some(&x) = values.get(&var.quantity) else {
                continue;
            };
            let Some(c) = fuzzy_classify(x, &var.sets) else {
                continue;
            };
            let Some(&action) = var.actions.get(&c.label) else {
                continue;
            };
            if c.membership <= 0.0 {
                continue;
            }
            let condition = format!(
                "{} is {} (membership {})",
                self.display_name(&var.quantity),
                c.label,
                fmt4(c.membership)
            );
            let explanation = format!("{condition}: {}", self.describe(&var.quantity, x));
            out.push(Recommendation::new(
                action,
                condition,
                explanation,
                Confidence::saturating(c.membership),
                ReasonerKind::Fuzzy,
            ));
        }
        out
    }

    fn dempster_shafer(
        &self,
        snapshot: &Snapshot,
        values: &BTreeMap<String, f64>,
    ) -> Vec<Recommendation> {
        let Some(var) = self.kb.fuzzy.variable(MOISTURE_QUANTITY) else {
            return Vec::new();
        };
        let mut sources = Vec::new();
        for r in snapshot.of_quantity(MOISTURE_QUANTITY) {
            let Some(c) = fuzzy_classify(r.value(), &var.sets) else {
                continue;
            };
            if let Ok(bba) = Bba::simple_support(c.label, r.confidence().value() * c.membership) {
                sources.push(bba);
            }
        }
        if sources.is_empty() {
            return Vec::new();
        }
        let Ok(fused) = combine_all(&sources) else {
            return Vec::new();
        };
        let beliefs: Vec<(FuzzyLabel, f64, f64)> = var
            .sets
            .iter()
            .map(|s| {
                (
                    s.label,
                    fused.belief(FocalSet::singleton(s.label)),
                    s.center(),
                )
            })
            .collect();
        let Some((label, belief)) = argmax_by_center(&beliefs) else {
            return Vec::new();
        };
        let (Some(&action), true) = (var.actions.get(&label), belief > 0.0) else {
            return Vec::new();
        };
        let x = values[MOISTURE_QUANTITY];
        let condition = format!(
            "Fused evidence from {} source(s) supports {} (belief {})",
            sources.len(),
            label,
            fmt4(belief)
        );
        let explanation = format!("{condition}: {}", self.describe(MOISTURE_QUANTITY, x));
        vec![Recommendation::new(
            action,
            condition,
            explanation,
            Confidence::saturating(belief),
            ReasonerKind::DempsterShafer,
        )]
    }

    fn bayesian(&self, values: &BTreeMap<String, f64>) -> Vec<Recommendation> {
        let (Some(var), Some(&x)) = (
            self.kb.fuzzy.variable(MOISTURE_QUANTITY),
            values.get(MOISTURE_QUANTITY),
        ) else {
            return Vec::new();
        };
        let labels = [FuzzyLabel::Low, FuzzyLabel::Adequate, FuzzyLabel::High];
        let likelihood = labels.map(|l| var.set(l).map_or(0.0, |s| s.membership(x)));
        let Ok(posterior) =
            self.kb
                .bayes
                .query_weighted(Node::SoilMoisture, &self.bn_context, likelihood)
        else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (label, state) in labels.into_iter().zip(Moisture::ALL) {
            let p = posterior.get(state.as_str()).unwrap_or(0.0);
            let Some(&action) = var.actions.get(&label) else {
                continue;
            };
            if p <= 0.0 {
                continue;
            }
            let condition = format!(
                "P({} = {}) is {}",
                self.display_name(MOISTURE_QUANTITY),
                state.as_str(),
                fmt4(p)
            );
            let explanation = format!("{condition}: {}", self.describe(MOISTURE_QUANTITY, x));
            out.push(Recommendation::new(
                action,
                condition,
                explanation,
                Confidence::saturating(p),
                ReasonerKind::Bayesian,
            ));
        }
        out
    }

    fn case_based(&self, values: &BTreeMap<String, f64>) -> Vec<Recommendation> {
        let base = &self.kb.cases;
        let mut out = Vec::new();
        for (case, sim) in cbr_retrieve(values, base, base.k, &self.kb.ontology) {
            if sim < base.min_similarity {
                continue;
            }
            let current: Vec<String> = case
                .readings
                .keys()
                .filter_map(|q| values.get(q).map(|v| self.describe(q, *v)))
                .collect();
            let condition = format!("Similar past case (similarity {})", fmt4(sim));
            let explanation = format!("{condition}: {}", current.join(", "));
            for &action in &case.actions {
                if out.iter().any(|r: &Recommendation| r.action_id == action) {
                    continue;
                }
                out.push(Recommendation::new(
                    action,
                    condition.clone(),
                    explanation.clone(),
                    Confidence::saturating(sim),
                    ReasonerKind::CaseBased,
                ));
            }
        }
        out
    }
}
