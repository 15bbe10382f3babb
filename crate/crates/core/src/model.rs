//! Domain types shared by every layer of the gateway.
//!
//! Everything here is immutable once constructed. Constructors validate their
//! invariants so that an invalid value cannot travel further down the
//! pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ModelError;

/// Milliseconds since the Unix epoch, UTC.
pub type TimestampMs = u64;

/// Largest sensor number accepted inside a [`SensorId`].
pub const MAX_SENSOR_NUMBER: u16 = 9999;

/// Three-part sensor identifier: job code, numeric id and application code.
///
/// `TEMP102SC` decomposes into job `TEMP`, number `102` and application `SC`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SensorId {
    job: String,
    number: u16,
    application: String,
}

fn is_code(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_uppercase())
}

impl SensorId {
    pub fn new(
        job: impl Into<String>,
        number: u16,
        application: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let job = job.into();
        let application = application.into();
        if !is_code(&job) {
            return Err(ModelError::MalformedId(format!("job code {job:?}")));
        }
        if !is_code(&application) {
            return Err(ModelError::MalformedId(format!(
                "application code {application:?}"
            )));
        }
        if number == 0 || number > MAX_SENSOR_NUMBER {
            return Err(ModelError::MalformedId(format!(
                "sensor number {number} outside 1..={MAX_SENSOR_NUMBER}"
            )));
        }
        Ok(Self {
            job,
            number,
            application,
        })
    }

    pub fn job(&self) -> &str {
        &self.job
    }

    pub fn number(&self) -> u16 {
        self.number
    }

    pub fn application(&self) -> &str {
        &self.application
    }

    /// Splits `text` into leading letters, digits and trailing letters.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let malformed = || ModelError::MalformedId(text.to_string());
        if text.is_empty() {
            return Err(malformed());
        }
        let job_end = text
            .find(|c: char| !c.is_ascii_uppercase())
            .ok_or_else(malformed)?;
        let rest = &text[job_end..];
        let digits_end = rest
            .find(|c: char| !c.is_ascii_digit())
            .ok_or_else(malformed)?;
        let (digits, application) = rest.split_at(digits_end);
        if job_end == 0 || digits.is_empty() || !is_code(application) {
            return Err(malformed());
        }
        // Zero padding would break render/parse identity.
        if digits.starts_with('0') {
            return Err(malformed());
        }
        let number: u16 = digits.parse().map_err(|_| malformed())?;
        Self::new(&text[..job_end], number, application).map_err(|_| malformed())
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.job, self.number, self.application)
    }
}

impl FromStr for SensorId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for SensorId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SensorId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// GPS position of a sensor in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoLocation {
    latitude: f64,
    longitude: f64,
}

impl GeoLocation {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self, ModelError> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(ModelError::OutOfBounds {
                field: "latitude",
                value: latitude,
            });
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(ModelError::OutOfBounds {
                field: "longitude",
                value: longitude,
            });
        }
        Ok(Self {
            latitude,
            longitude,
        })
    }

    pub fn latitude(&self) -> f64 {
        self.latitude
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }
}

impl<'de> Deserialize<'de> for GeoLocation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            latitude: f64,
            longitude: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        Self::new(raw.latitude, raw.longitude).map_err(serde::de::Error::custom)
    }
}

/// A probability-like weight in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Confidence(f64);

impl Confidence {
    pub const CERTAIN: Confidence = Confidence(1.0);
    pub const NONE: Confidence = Confidence(0.0);

    pub fn new(value: f64) -> Result<Self, ModelError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(ModelError::OutOfBounds {
                field: "confidence",
                value,
            })
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to zero. For values produced by
    /// arithmetic that may drift by a rounding error past the bounds.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Self(0.0)
        } else {
            Self(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Confidence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Self::new(v).map_err(serde::de::Error::custom)
    }
}

/// One voltage-domain sample as produced by the perception layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReading {
    pub sensor_id: SensorId,
    pub voltage: f64,
    pub adc_counts: u32,
    pub timestamp: TimestampMs,
}

/// Returns true when `keyword` is a canonical keyword: lowercase ASCII
/// letters, digits and underscores.
pub fn is_canonical_keyword(keyword: &str) -> bool {
    !keyword.is_empty()
        && keyword
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// The intermediate form every payload is translated into.
///
/// Ontology consistency (known quantity, matching unit, value in range) is
/// checked by `interop::validate`; the constructor only enforces what can be
/// checked without an ontology.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalRecord {
    pub(crate) sensor_id: SensorId,
    pub(crate) quantity: String,
    pub(crate) value: f64,
    pub(crate) unit: String,
    pub(crate) timestamp: TimestampMs,
    pub(crate) location: GeoLocation,
    pub(crate) description: String,
    pub(crate) keywords: Vec<String>,
    pub(crate) confidence: Confidence,
}

/// Field-by-field input for [`CanonicalRecord::new`].
#[derive(Debug, Clone)]
pub struct RecordFields {
    pub sensor_id: SensorId,
    pub quantity: String,
    pub value: f64,
    pub unit: String,
    pub timestamp: TimestampMs,
    pub location: GeoLocation,
    pub description: String,
    pub keywords: Vec<String>,
    pub confidence: Confidence,
}

impl CanonicalRecord {
    pub fn new(fields: RecordFields) -> Result<Self, ModelError> {
        if fields.quantity.is_empty() {
            return Err(ModelError::InvalidField {
                field: "quantity",
                reason: "empty".into(),
            });
        }
        if fields.unit.is_empty() {
            return Err(ModelError::InvalidField {
                field: "unit",
                reason: "empty".into(),
            });
        }
        if !fields.value.is_finite() {
            return Err(ModelError::InvalidField {
                field: "value",
                reason: "not a finite number".into(),
            });
        }
        if fields.description.chars().any(char::is_control) {
            return Err(ModelError::InvalidField {
                field: "description",
                reason: "control characters are not allowed".into(),
            });
        }
        if fields.description.trim() != fields.description {
            return Err(ModelError::InvalidField {
                field: "description",
                reason: "leading or trailing whitespace".into(),
            });
        }
        if let Some(bad) = fields.keywords.iter().find(|k| !is_canonical_keyword(k)) {
            return Err(ModelError::InvalidField {
                field: "keywords",
                reason: format!("{bad:?} is not a canonical keyword"),
            });
        }
        Ok(Self {
            sensor_id: fields.sensor_id,
            quantity: fields.quantity,
            value: fields.value,
            unit: fields.unit,
            timestamp: fields.timestamp,
            location: fields.location,
            description: fields.description,
            keywords: fields.keywords,
            confidence: fields.confidence,
        })
    }

    pub fn sensor_id(&self) -> &SensorId {
        &self.sensor_id
    }

    pub fn quantity(&self) -> &str {
        &self.quantity
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn timestamp(&self) -> TimestampMs {
        self.timestamp
    }

    pub fn location(&self) -> GeoLocation {
        self.location
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn confidence(&self) -> Confidence {
        self.confidence
    }

    /// Copy of this record with a different confidence.
    pub fn with_confidence(&self, confidence: Confidence) -> Self {
        Self {
            confidence,
            ..self.clone()
        }
    }

    pub fn into_fields(self) -> RecordFields {
        RecordFields {
            sensor_id: self.sensor_id,
            quantity: self.quantity,
            value: self.value,
            unit: self.unit,
            timestamp: self.timestamp,
            location: self.location,
            description: self.description,
            keywords: self.keywords,
            confidence: self.confidence,
        }
    }

    /// Canonical wire form: one flat JSON object with fixed field order.
    pub fn to_wire(&self) -> String {
        serde_json::to_string(&WireRecord::from(self)).expect("wire record always serializes")
    }

    pub fn from_wire(text: &str) -> Result<Self, ModelError> {
        let wire: WireRecord =
            serde_json::from_str(text).map_err(|e| ModelError::Wire(e.to_string()))?;
        wire.try_into()
    }
}

/// Flat serde view of a [`CanonicalRecord`] using the canonical field names.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    sensor_id: SensorId,
    quantity: String,
    value: f64,
    unit: String,
    timestamp: TimestampMs,
    lat: f64,
    lon: f64,
    description: String,
    keywords: Vec<String>,
    confidence: f64,
}

impl From<&CanonicalRecord> for WireRecord {
    fn from(r: &CanonicalRecord) -> Self {
        Self {
            sensor_id: r.sensor_id.clone(),
            quantity: r.quantity.clone(),
            value: r.value,
            unit: r.unit.clone(),
            timestamp: r.timestamp,
            lat: r.location.latitude(),
            lon: r.location.longitude(),
            description: r.description.clone(),
            keywords: r.keywords.clone(),
            confidence: r.confidence.value(),
        }
    }
}

impl TryFrom<WireRecord> for CanonicalRecord {
    type Error = ModelError;

    fn try_from(w: WireRecord) -> Result<Self, Self::Error> {
        CanonicalRecord::new(RecordFields {
            sensor_id: w.sensor_id,
            quantity: w.quantity,
            value: w.value,
            unit: w.unit,
            timestamp: w.timestamp,
            location: GeoLocation::new(w.lat, w.lon)?,
            description: w.description,
            keywords: w.keywords,
            confidence: Confidence::new(w.confidence)?,
        })
    }
}

impl Serialize for CanonicalRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        WireRecord::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CanonicalRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireRecord::deserialize(deserializer)?;
        wire.try_into().map_err(serde::de::Error::custom)
    }
}

/// Actions the reasoning layer can recommend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionId {
    Irrigate,
    ActivateCooling,
    GrowLightsOn,
    AdjustPh,
}

impl ActionId {
    pub const ALL: [ActionId; 4] = [
        ActionId::Irrigate,
        ActionId::ActivateCooling,
        ActionId::GrowLightsOn,
        ActionId::AdjustPh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionId::Irrigate => "irrigate",
            ActionId::ActivateCooling => "activate_cooling",
            ActionId::GrowLightsOn => "grow_lights_on",
            ActionId::AdjustPh => "adjust_ph",
        }
    }

    /// Operator-facing wording of the action.
    pub fn label(self) -> &'static str {
        match self {
            ActionId::Irrigate => "Irrigate the field",
            ActionId::ActivateCooling => "Activate cooling system",
            ActionId::GrowLightsOn => "Turn on grow lights",
            ActionId::AdjustPh => "Adjust soil pH with additives",
        }
    }

    /// Actuator channel number used for actuation topics.
    pub fn channel(self) -> u16 {
        match self {
            ActionId::Irrigate => 1,
            ActionId::ActivateCooling => 2,
            ActionId::GrowLightsOn => 3,
            ActionId::AdjustPh => 4,
        }
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ModelError::UnknownAction(s.to_string()))
    }
}

/// Which reasoner produced a piece of evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerKind {
    Rule,
    Fuzzy,
    DempsterShafer,
    Bayesian,
    CaseBased,
}

impl ReasonerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonerKind::Rule => "rule",
            ReasonerKind::Fuzzy => "fuzzy",
            ReasonerKind::DempsterShafer => "dempster_shafer",
            ReasonerKind::Bayesian => "bayesian",
            ReasonerKind::CaseBased => "case_based",
        }
    }
}

impl fmt::Display for ReasonerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Another candidate action and how strongly it is supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub action_id: ActionId,
    pub confidence: Confidence,
}

/// One reasoner's contribution to a merged recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub source: ReasonerKind,
    pub confidence: Confidence,
    pub explanation: String,
}

/// An action suggested to the operator, with its justification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub action_id: ActionId,
    pub condition: String,
    pub explanation: String,
    pub confidence: Confidence,
    pub source: ReasonerKind,
    #[serde(default)]
    pub alternatives: Vec<Alternative>,
    #[serde(default)]
    pub evidence: Vec<Evidence>,
}

impl Recommendation {
    pub fn new(
        action_id: ActionId,
        condition: impl Into<String>,
        explanation: impl Into<String>,
        confidence: Confidence,
        source: ReasonerKind,
    ) -> Self {
        let condition = condition.into();
        let explanation = explanation.into();
        let evidence = vec![Evidence {
            source,
            confidence,
            explanation: explanation.clone(),
        }];
        Self {
            action_id,
            condition,
            explanation,
            confidence,
            source,
            alternatives: Vec::new(),
            evidence,
        }
    }
}

/// Formats a measured value the way explanations show it: two decimals.
pub fn format_measurement(value: f64) -> String {
    format!("{value:.2}")
}
