//! Core of the semfarm gateway: the shared domain model and every
//! processing stage that does not need a network.
//!
//! * [`model`]: sensor ids, canonical records, recommendations.
//! * [`sim`]: perception-layer simulator producing voltage readings.
//! * [`annotate`]: voltage to engineering units plus metadata.
//! * [`interop`]: ontology-driven translation, validation and synonyms.
//! * [`reasoning`]: rules, fuzzy sets, evidence fusion, Bayesian and
//!   case-based reasoning, and the aggregator.

pub mod annotate;
pub mod error;
pub mod interop;
pub mod model;
pub mod reasoning;
pub mod sim;

pub use error::{ConfigError, ModelError};
pub use model::{
    ActionId, Alternative, CanonicalRecord, Confidence, Evidence, GeoLocation, RawReading,
    ReasonerKind, Recommendation, RecordFields, SensorId, TimestampMs,
};
