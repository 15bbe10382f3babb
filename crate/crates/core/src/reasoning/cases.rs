//! Case-based retrieval over past reading snapshots.
//!
//! Case base file layout (JSON object):
//!
//! ```json
//! {
//!   "k": 1,
//!   "min_similarity": 0.9,
//!   "cases": [
//!     { "readings": { "soil_moisture": 22.0, "temperature": 31.0 }, "actions": ["irrigate"] }
//!   ]
//! }
//! ```
//!
//! Similarity is `1 / (1 + d)` where `d` is the Euclidean distance over the
//! quantities both snapshots share, each difference divided by that
//! quantity's valid-range width.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{PoisonError, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{read_config_file, ConfigError};
use crate::interop::Ontology;
use crate::model::ActionId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub readings: BTreeMap<String, f64>,
    pub actions: Vec<ActionId>,
}

impl Case {
    pub fn check(&self, ontology: &Ontology) -> Result<(), ConfigError> {
        if self.readings.is_empty() || self.actions.is_empty() {
            return Err(ConfigError::invalid("case", "needs readings and actions"));
        }
        for (q, v) in &self.readings {
            if ontology.quantity(q).is_none() {
                return Err(ConfigError::invalid(
                    "case",
                    format!("unknown quantity {q:?}"),
                ));
            }
            if !v.is_finite() {
                return Err(ConfigError::invalid("case", format!("{q} is not finite")));
            }
        }
        Ok(())
    }
}

/// Scaled distance between two snapshots, or `None` when they share no
/// quantity known to the ontology.
pub fn scaled_distance(
    current: &BTreeMap<String, f64>,
    case: &BTreeMap<String, f64>,
    ontology: &Ontology,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut shared = 0;
    for (q, x) in current {
        let (Some(c), Some(def)) = (case.get(q), ontology.quantity(q)) else {
            continue;
        };
        let d = (x - c) / def.range_width();
        sum += d * d;
        shared += 1;
    }
    (shared > 0).then(|| sum.sqrt())
}

pub fn similarity(distance: f64) -> f64 {
    1.0 / (1.0 + distance)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default = "default_min_similarity")]
    min_similarity: f64,
    #[serde(default)]
    cases: Vec<Case>,
}

fn default_k() -> usize {
    1
}

fn default_min_similarity() -> f64 {
    0.9
}

/// Cases behind a lock: appends take the write side, retrieval the read side.
#[derive(Debug)]
pub struct CaseBase {
    cases: RwLock<Vec<Case>>,
    pub k: usize,
    pub min_similarity: f64,
}

const BUNDLED: &str = include_str!("../../data/cases.json");

impl CaseBase {
    pub fn new(cases: Vec<Case>) -> Self {
        Self {
            cases: RwLock::new(cases),
            k: default_k(),
            min_similarity: default_min_similarity(),
        }
    }

    pub fn bundled(ontology: &Ontology) -> Self {
        Self::from_json(BUNDLED, ontology).expect("bundled case base is valid")
    }

    pub fn load(path: &Path, ontology: &Ontology) -> Result<Self, ConfigError> {
        Self::from_json(&read_config_file(path)?, ontology)
    }

    pub fn from_json(text: &str, ontology: &Ontology) -> Result<Self, ConfigError> {
        let file: CaseFile =
            serde_json::from_str(text).map_err(|e| ConfigError::parse("case base", e))?;
        if file.k == 0 {
            return Err(ConfigError::invalid("case base", "k must be at least 1"));
        }
        if !(0.0..=1.0).contains(&file.min_similarity) {
            return Err(ConfigError::invalid(
                "case base",
                "min_similarity outside [0, 1]",
            ));
        }
        for case in &file.cases {
            case.check(ontology)?;
        }
        Ok(Self {
            cases: RwLock::new(file.cases),
            k: file.k,
            min_similarity: file.min_similarity,
        })
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, case: Case) {
        self.cases
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .push(case);
    }

    pub fn cases(&self) -> Vec<Case> {
        self.read().clone()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Vec<Case>> {
        self.cases.read().unwrap_or_else(PoisonError::into_inner)
    }
}

/// Top `k` cases by similarity, descending; equal similarities keep case
/// base order. Cases sharing no quantity with `current` are skipped.
pub fn cbr_retrieve(
    current: &BTreeMap<String, f64>,
    base: &CaseBase,
    k: usize,
    ontology: &Ontology,
) -> Vec<(Case, f64)> {
    let cases = base.read();
    let mut scored: Vec<(&Case, f64)> = cases
        .iter()
        .filter_map(|c| scaled_distance(current, &c.readings, ontology).map(|d| (c, similarity(d))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored
        .into_iter()
        .take(k)
        .map(|(c, s)| (c.clone(), s))
        .collect()
}
