//! Real-time semantic annotation: voltage to human-readable units, then
//! metadata (id decomposition, location, description) attached from the
//! ontology. Deterministic, no learned components.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::error::ModelError;
use crate::interop::Ontology;
use crate::model::{CanonicalRecord, Confidence, RawReading, RecordFields, SensorId};
use crate::sim::SensorSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotateError {
    #[error("reading from {reading} does not match spec for {spec}")]
    SpecMismatch { reading: SensorId, spec: SensorId },
    #[error("job code {0} has no ontology entry")]
    UnknownJob(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotatedRecord {
    pub canonical: CanonicalRecord,
    pub raw: RawReading,
    pub annotation_latency_us: u64,
}

fn round_to(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

/// Engineering-unit value of a reading, rounded to the sensor's decimals.
pub fn calibrate(raw: &RawReading, spec: &SensorSpec) -> Result<f64, AnnotateError> {
    if raw.sensor_id != spec.id {
        return Err(AnnotateError::SpecMismatch {
            reading: raw.sensor_id.clone(),
            spec: spec.id.clone(),
        });
    }
    Ok(round_to(
        spec.calibration.to_units(raw.voltage),
        spec.decimals,
    ))
}

pub fn annotate(
    raw: &RawReading,
    spec: &SensorSpec,
    ontology: &Ontology,
) -> Result<AnnotatedRecord, AnnotateError> {
    let started = Instant::now();
    let value = calibrate(raw, spec)?;
    let job = raw.sensor_id.job();
    let (quantity, def) = ontology
        .quantity_for_job(job)
        .ok_or_else(|| AnnotateError::UnknownJob(job.to_string()))?;
    let canonical = CanonicalRecord::new(RecordFields {
        sensor_id: raw.sensor_id.clone(),
        quantity: quantity.to_string(),
        value,
        unit: def.unit.clone(),
        timestamp: raw.timestamp,
        location: spec.location,
        description: def.meaning.clone(),
        keywords: def.keywords.clone(),
        confidence: Confidence::CERTAIN,
    })?;
    Ok(AnnotatedRecord {
        canonical,
        raw: raw.clone(),
        annotation_latency_us: started.elapsed().as_micros() as u64,
    })
}
