//! Format-agnostic translation through the canonical intermediate form.
//!
//! A sender maps its native payload into a [`CanonicalRecord`] using the
//! shared [`Ontology`], validates it, and only then forwards it. Receivers
//! render the canonical record into whatever format they prefer. Rejected
//! payloads are logged once and never forwarded.

mod codec;
mod errlog;
pub mod ontology;
pub mod synonyms;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codec::{decode, encode};
pub use errlog::{ErrorSink, FileErrorLog, MemoryErrorLog};
pub use ontology::{Ontology, QuantityDef};

use crate::model::CanonicalRecord;

/// Serializations the gateway understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Xmllite,
    Kv,
}

impl Format {
    pub const ALL: [Format; 4] = [Format::Json, Format::Csv, Format::Xmllite, Format::Kv];

    pub fn as_str(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Xmllite => "xmllite",
            Format::Kv => "kv",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown format {0:?} (expected json, csv, xmllite or kv)")]
pub struct UnknownFormat(pub String);

impl FromStr for Format {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Format::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownFormat(s.to_string()))
    }
}

/// The fixed canonical field names of the intermediate form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    SensorId,
    Quantity,
    Value,
    Unit,
    Timestamp,
    Lat,
    Lon,
    Description,
    Keywords,
    Confidence,
}

impl Field {
    /// Wire order.
    pub const ALL: [Field; 10] = [
        Field::SensorId,
        Field::Quantity,
        Field::Value,
        Field::Unit,
        Field::Timestamp,
        Field::Lat,
        Field::Lon,
        Field::Description,
        Field::Keywords,
        Field::Confidence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::SensorId => "sensor_id",
            Field::Quantity => "quantity",
            Field::Value => "value",
            Field::Unit => "unit",
            Field::Timestamp => "timestamp",
            Field::Lat => "lat",
            Field::Lon => "lon",
            Field::Description => "description",
            Field::Keywords => "keywords",
            Field::Confidence => "confidence",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Map,
    Validate,
}

/// Why a payload was refused. Serialized one per line into the error log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{stage:?} error on {field} ({source_format}): {reason}")]
pub struct TranslationError {
    pub stage: Stage,
    pub field: String,
    pub reason: String,
    pub source_format: Format,
}

impl TranslationError {
    pub(crate) fn map(format: Format, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::new(Stage::Map, format, field, reason)
    }

    pub(crate) fn validate(
        format: Format,
        field: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Self::new(Stage::Validate, format, field, reason)
    }

    fn new(
        stage: Stage,
        format: Format,
        field: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        let mut reason = reason.into();
        if reason.is_empty() {
            reason.push_str("unspecified");
        }
        Self {
            stage,
            field: field.into(),
            reason,
            source_format: format,
        }
    }

    pub fn to_log_line(&self) -> String {
        serde_json::to_string(self).expect("translation error serializes")
    }
}

/// Checks a record against the ontology, reporting the first failure.
///
/// The returned error is tagged with [`Format::Json`], the canonical wire
/// form; [`decode`] retags it with the payload's format.
pub fn validate(record: &CanonicalRecord, ontology: &Ontology) -> Result<(), TranslationError> {
    validate_as(record, ontology, Format::Json)
}

pub(crate) fn validate_as(
    record: &CanonicalRecord,
    ontology: &Ontology,
    format: Format,
) -> Result<(), TranslationError> {
    let Some(def) = ontology.quantity(record.quantity()) else {
        return Err(TranslationError::validate(
            format,
            Field::Quantity.name(),
            format!("unknown quantity {:?}", record.quantity()),
        ));
    };
    if record.unit() != def.unit {
        return Err(TranslationError::validate(
            format,
            Field::Unit.name(),
            format!(
                "unit {:?} does not match {} (expected {:?})",
                record.unit(),
                record.quantity(),
                def.unit
            ),
        ));
    }
    if !def.contains(record.value()) {
        return Err(TranslationError::validate(
            format,
            Field::Value.name(),
            format!(
                "{} outside valid range [{}, {}] for {}",
                record.value(),
                def.min(),
                def.max(),
                record.quantity()
            ),
        ));
    }
    if let Some((expected, _)) = ontology.quantity_for_job(record.sensor_id().job()) {
        if expected != record.quantity() {
            return Err(TranslationError::validate(
                format,
                Field::SensorId.name(),
                format!(
                    "job code {} measures {expected}, not {}",
                    record.sensor_id().job(),
                    record.quantity()
                ),
            ));
        }
    }
    Ok(())
}

/// Decoding front door that logs every rejected payload exactly once.
#[derive(Clone)]
pub struct Translator {
    ontology: Arc<Ontology>,
    errors: Arc<dyn ErrorSink>,
}

impl Translator {
    pub fn new(ontology: Arc<Ontology>, errors: Arc<dyn ErrorSink>) -> Self {
        Self { ontology, errors }
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn translate(
        &self,
        payload: &[u8],
        format: Format,
    ) -> Result<CanonicalRecord, TranslationError> {
        decode(payload, format, &self.ontology).inspect_err(|e| self.errors.record(e))
    }

    /// Validates an already-canonical record, logging a rejection.
    pub fn admit(&self, record: &CanonicalRecord) -> Result<(), TranslationError> {
        validate(record, &self.ontology).inspect_err(|e| self.errors.record(e))
    }

    pub fn reject(&self, error: &TranslationError) {
        self.errors.record(error);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Confidence, GeoLocation, RecordFields, SensorId};

    fn record(quantity: &str, unit: &str, value: f64, id: &str) -> CanonicalRecord {
        CanonicalRecord::new(RecordFields {
            sensor_id: SensorId::parse(id).unwrap(),
            quantity: quantity.into(),
            value,
            unit: unit.into(),
            timestamp: 1,
            location: GeoLocation::new(0.0, 0.0).unwrap(),
            description: "x".into(),
            keywords: vec![],
            confidence: Confidence::CERTAIN,
        })
        .unwrap()
    }

    #[test]
    fn validate_accepts_table_temperature() {
        let o = Ontology::bundled();
        assert!(validate(&record("temperature", "Celsius", 36.78, "TEMP102AGR"), &o).is_ok());
    }

    #[test]
    fn validate_rejects_unit_mismatch() {
        let o = Ontology::bundled();
        let err = validate(&record("temperature", "%", 36.78, "TEMP102AGR"), &o).unwrap_err();
        assert_eq!(err.stage, Stage::Validate);
        assert_eq!(err.field, "unit");
    }

    #[test]
    fn validate_rejects_out_of_range_ph() {
        let o = Ontology::bundled();
        let err = validate(&record("ph", "pH", 19.0, "PH1AGR"), &o).unwrap_err();
        assert_eq!(err.field, "value");
    }

    #[test]
    fn validate_rejects_unknown_quantity_and_wrong_job() {
        let o = Ontology::bundled();
        assert_eq!(
            validate(&record("radiation", "Sv", 1.0, "RAD1AGR"), &o)
                .unwrap_err()
                .field,
            "quantity"
        );
        assert_eq!(
            validate(&record("temperature", "Celsius", 20.0, "SOIL7AGR"), &o)
                .unwrap_err()
                .field,
            "sensor_id"
        );
    }

    #[test]
    fn translator_logs_each_rejection_once() {
        let log = Arc::new(MemoryErrorLog::default());
        let t = Translator::new(Arc::new(Ontology::bundled()), log.clone());
        assert!(t.translate(b"frobnitz=1\n", Format::Kv).is_err());
        assert!(t.translate(b"not json", Format::Json).is_err());
        assert_eq!(log.len(), 2);
        let good = record("temperature", "Celsius", 36.78, "TEMP102AGR");
        assert!(t.translate(good.to_wire().as_bytes(), Format::Json).is_ok());
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn format_tags_parse() {
        assert_eq!("XMLLITE".parse::<Format>().unwrap(), Format::Xmllite);
        assert!("yaml".parse::<Format>().is_err());
    }
}
