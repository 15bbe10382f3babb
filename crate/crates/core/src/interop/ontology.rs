//! The shared ontology: quantities, units, spellings and valid ranges.
//!
//! File layout (JSON object):
//!
//! ```json
//! {
//!   "quantities": {
//!     "temperature": {
//!       "unit": "Celsius",
//!       "unit_aliases": ["C", "°C"],
//!       "aliases": ["temp"],
//!       "meaning": "Ambient temperature",
//!       "valid_range": [-40.0, 85.0],
//!       "job_codes": ["TEMP"],
//!       "keywords": ["temperature", "ambient"]
//!     }
//!   },
//!   "format_aliases": { "csv": { "id": "sensor_id" } }
//! }
//! ```
//!
//! Quantity aliases, unit aliases and field aliases match case-insensitively.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::{Field, Format};
use crate::error::{read_config_file, ConfigError};
use crate::model::is_canonical_keyword;

/// Definition of one canonical quantity.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantityDef {
    pub unit: String,
    #[serde(default)]
    pub unit_aliases: Vec<String>,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub meaning: String,
    pub valid_range: [f64; 2],
    #[serde(default)]
    pub job_codes: Vec<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    /// Name used in explanations, e.g. "Soil moisture".
    #[serde(default)]
    pub display_name: Option<String>,
    /// Unit suffix used in explanations, e.g. "%" or " Lux".
    #[serde(default)]
    pub display_unit: Option<String>,
}

impl QuantityDef {
    pub fn min(&self) -> f64 {
        self.valid_range[0]
    }

    pub fn max(&self) -> f64 {
        self.valid_range[1]
    }

    pub fn range_width(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min() && value <= self.max()
    }

    /// Explanation fragment such as `Soil moisture is 23.45%`.
    pub fn describe(&self, quantity: &str, value: f64) -> String {
        let name = self.display_name.as_deref().unwrap_or(quantity);
        let unit = match &self.display_unit {
            Some(u) => u.clone(),
            None => format!(" {}", self.unit),
        };
        format!(
            "{name} is {}{unit}",
            crate::model::format_measurement(value)
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyFile {
    quantities: BTreeMap<String, QuantityDef>,
    #[serde(default)]
    format_aliases: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Clone)]
pub struct Ontology {
    quantities: BTreeMap<String, QuantityDef>,
    format_aliases: BTreeMap<Format, BTreeMap<String, Field>>,
    quantity_lookup: HashMap<String, String>,
    unit_lookup: HashMap<(String, String), String>,
    job_lookup: HashMap<String, String>,
}

const BUNDLED: &str = include_str!("../../data/ontology.json");

impl Ontology {
    /// The agriculture ontology shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled ontology is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&read_config_file(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let file: OntologyFile =
            serde_json::from_str(text).map_err(|e| ConfigError::parse("ontology", e))?;
        Self::build(file)
    }

    fn build(file: OntologyFile) -> Result<Self, ConfigError> {
        let invalid = |reason: String| ConfigError::invalid("ontology", reason);
        let mut quantity_lookup = HashMap::new();
        let mut unit_lookup = HashMap::new();
        let mut job_lookup = HashMap::new();

        if file.quantities.is_empty() {
            return Err(invalid("no quantities defined".into()));
        }
        for (name, def) in &file.quantities {
            if name.is_empty() || def.unit.is_empty() {
                return Err(invalid(format!(
                    "quantity {name:?} needs a name and a unit"
                )));
            }
            let [lo, hi] = def.valid_range;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(format!(
                    "quantity {name}: valid_range min must be below max"
                )));
            }
            if let Some(k) = def.keywords.iter().find(|k| !is_canonical_keyword(k)) {
                return Err(invalid(format!(
                    "quantity {name}: keyword {k:?} not canonical"
                )));
            }
            for spelling in std::iter::once(name).chain(&def.aliases) {
                let key = spelling.to_lowercase();
                if let Some(prev) = quantity_lookup.insert(key, name.clone()) {
                    if &prev != name {
                        return Err(invalid(format!(
                            "alias {spelling:?} shared by {prev} and {name}"
                        )));
                    }
                }
            }
            for spelling in std::iter::once(&def.unit).chain(&def.unit_aliases) {
                unit_lookup.insert((name.clone(), spelling.to_lowercase()), def.unit.clone());
            }
            for job in &def.job_codes {
                if let Some(prev) = job_lookup.insert(job.clone(), name.clone()) {
                    return Err(invalid(format!(
                        "job code {job} shared by {prev} and {name}"
                    )));
                }
            }
        }

        let mut format_aliases = BTreeMap::new();
        for (tag, map) in file.format_aliases {
            let format: Format = tag
                .parse()
                .map_err(|_| invalid(format!("unknown format {tag:?} in format_aliases")))?;
            let mut resolved = BTreeMap::new();
            for (source, target) in map {
                let field = Field::from_name(&target).ok_or_else(|| {
                    invalid(format!(
                        "format {tag}: {source:?} maps to unknown field {target:?}"
                    ))
                })?;
                resolved.insert(source.to_lowercase(), field);
            }
            format_aliases.insert(format, resolved);
        }

        Ok(Self {
            quantities: file.quantities,
            format_aliases,
            quantity_lookup,
            unit_lookup,
            job_lookup,
        })
    }

    pub fn quantity(&self, name: &str) -> Option<&QuantityDef> {
        self.quantities.get(name)
    }

    pub fn quantities(&self) -> impl Iterator<Item = (&str, &QuantityDef)> {
        self.quantities.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Canonical quantity name for any accepted spelling.
    pub fn resolve_quantity(&self, spelling: &str) -> Option<&str> {
        self.quantity_lookup
            .get(&spelling.to_lowercase())
            .map(String::as_str)
    }

    /// Canonical unit for `spelling` in the context of `quantity`.
    pub fn resolve_unit(&self, quantity: &str, spelling: &str) -> Option<&str> {
        self.unit_lookup
            .get(&(quantity.to_string(), spelling.to_lowercase()))
            .map(String::as_str)
    }

    /// Quantity measured by sensors carrying `job` as their job code.
    pub fn quantity_for_job(&self, job: &str) -> Option<(&str, &QuantityDef)> {
        let name = self.job_lookup.get(job)?;
        self.quantities
            .get_key_value(name)
            .map(|(k, v)| (k.as_str(), v))
    }

    /// Canonical field addressed by a source field name in `format`.
    pub fn resolve_field(&self, format: Format, source: &str) -> Option<Field> {
        let key = source.to_lowercase();
        Field::from_name(&key).or_else(|| {
            self.format_aliases
                .get(&format)
                .and_then(|m| m.get(&key))
                .copied()
        })
    }
}
