//! Perception-layer simulator.
//!
//! Sensors are described by a two-point linear calibration from volts to
//! engineering units. Sampling adds gaussian noise in engineering units,
//! runs the inverse calibration and quantizes the voltage with an ADC model.
//!
//! # Scenario files
//!
//! Plain text, split into bracketed sections. Blank lines and lines starting
//! with `#` are ignored. Every table section starts with the header shown.
//!
//! ```text
//! [scenario]
//! duration_ms=60000
//! adc_bits=10
//! vref=5.0
//!
//! [sensors]
//! id,kind,quantity,v0,y0,v1,y1,lat,lon,period_ms,noise_sd,decimals
//! TEMP102AGR,passive,temperature,0,0,5,100,31.95,35.91,1000,0,2
//!
//! [samples]
//! timestamp_ms,sensor_id,true_value
//! 1000,TEMP102AGR,36.78
//!
//! [generators]
//! sensor_id,base,amplitude,cycle_ms
//! TEMP102AGR,25,5,60000
//! ```
//!
//! `decimals` is optional (default 2). Generators emit one sample per sensor
//! period from time zero until `duration_ms`, following
//! `base + amplitude * sin(2πt / cycle_ms)`.

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{read_config_file, ConfigError};
use crate::model::{GeoLocation, RawReading, SensorId, TimestampMs};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{sensor}: value {value} needs {voltage} V, outside [0, {vref}] V")]
    OutOfRange {
        sensor: SensorId,
        value: f64,
        voltage: f64,
        vref: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Passive,
    Active,
}

/// Two-point linear map from volts to engineering units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub v0: f64,
    pub y0: f64,
    pub v1: f64,
    pub y1: f64,
}

impl Calibration {
    pub fn new(v0: f64, y0: f64, v1: f64, y1: f64) -> Result<Self, ConfigError> {
        let all_finite = [v0, y0, v1, y1].iter().all(|x| x.is_finite());
        if !all_finite || v0 == v1 || y0 == y1 {
            return Err(ConfigError::invalid(
                "calibration",
                format!("({v0} V -> {y0}, {v1} V -> {y1}) is degenerate"),
            ));
        }
        Ok(Self { v0, y0, v1, y1 })
    }

    pub fn to_units(&self, volts: f64) -> f64 {
        self.y0 + (volts - self.v0) * (self.y1 - self.y0) / (self.v1 - self.v0)
    }

    pub fn to_volts(&self, units: f64) -> f64 {
        self.v0 + (units - self.y0) * (self.v1 - self.v0) / (self.y1 - self.y0)
    }
}

/// Analog-to-digital converter model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub bits: u32,
    pub vref: f64,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self {
            bits: 10,
            vref: 5.0,
        }
    }
}

impl AdcConfig {
    pub fn max_count(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// Volts represented by one count.
    pub fn step(&self) -> f64 {
        self.vref / f64::from(self.max_count())
    }

    pub fn quantize(&self, volts: f64) -> u32 {
        let counts = (volts / self.vref * f64::from(self.max_count())).round();
        counts.clamp(0.0, f64::from(self.max_count())) as u32
    }
}

pub const DEFAULT_DECIMALS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub id: SensorId,
    pub kind: SensorKind,
    pub quantity: String,
    pub calibration: Calibration,
    pub location: GeoLocation,
    pub period_ms: u64,
    pub noise_sd: f64,
    /// Decimal places the calibrated value is reported with.
    pub decimals: u32,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.period_ms == 0 {
            return Err(ConfigError::invalid(
                "sensor",
                format!("{}: period must be > 0", self.id),
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(ConfigError::invalid(
                "sensor",
                format!("{}: noise_sd must be >= 0", self.id),
            ));
        }
        if self.decimals > 9 {
            return Err(ConfigError::invalid(
                "sensor",
                format!("{}: at most 9 decimals", self.id),
            ));
        }
        Ok(())
    }
}

/// Draws one reading for `true_value`. All randomness comes from `rng_seed`.
pub fn sample(
    spec: &SensorSpec,
    true_value: f64,
    timestamp: TimestampMs,
    rng_seed: u64,
    adc: &AdcConfig,
) -> Result<RawReading, SimError> {
    let noisy = if spec.noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let normal =
            Normal::new(0.0, spec.noise_sd).expect("noise_sd validated as finite and >= 0");
        true_value + normal.sample(&mut rng)
    } else {
        true_value
    };
    let voltage = spec.calibration.to_volts(noisy);
    if !(0.0..=adc.vref).contains(&voltage) {
        return Err(SimError::OutOfRange {
            sensor: spec.id.clone(),
            value: noisy,
            voltage,
            vref: adc.vref,
        });
    }
    Ok(RawReading {
        sensor_id: spec.id.clone(),
        voltage,
        adc_counts: adc.quantize(voltage),
        timestamp,
    })
}

/// One scripted sample. The sensor id is kept as text so that rows naming
/// unknown sensors can be counted as dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptRow {
    pub timestamp: TimestampMs,
    pub sensor_id: String,
    pub true_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub sensor_id: SensorId,
    pub base: f64,
    pub amplitude: f64,
    pub cycle_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sensors: Vec<SensorSpec>,
    pub script: Vec<ScriptRow>,
    pub generators: Vec<Generator>,
    pub duration_ms: u64,
    pub adc: AdcConfig,
    /// Rows the parser could not read; reported as dropped by a run.
    pub malformed_rows: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub emitted: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    /// Real-time multiplier; `None` replays as fast as possible.
    pub rate: Option<f64>,
    /// Skip rows at or before this timestamp, e.g. to resume a replay.
    /// Skipped rows still consume their noise seeds.
    pub skip_through: Option<TimestampMs>,
}

impl RunOptions {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Longest single sleep while pacing, so a stop request is seen promptly.
const PACE_SLICE: Duration = Duration::from_millis(50);

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Scenario {
    pub fn empty() -> Self {
        Self {
            sensors: Vec::new(),
            script: Vec::new(),
            generators: Vec::new(),
            duration_ms: 0,
            adc: AdcConfig::default(),
            malformed_rows: 0,
        }
    }

    pub fn sensor(&self, id: &SensorId) -> Option<&SensorSpec> {
        self.sensors.iter().find(|s| &s.id == id)
    }

    /// Scripted and generated samples merged in global timestamp order.
    /// Ties keep script rows first, then generator order.
    fn timeline(&self) -> Vec<ScriptRow> {
        let mut rows = self.script.clone();
        for g in &self.generators {
            let Some(spec) = self.sensor(&g.sensor_id) else {
                continue;
            };
            let mut t = 0;
            while t < self.duration_ms {
                let phase = if g.cycle_ms == 0 {
                    0.0
                } else {
                    2.0 * std::f64::consts::PI * t as f64 / g.cycle_ms as f64
                };
                rows.push(ScriptRow {
                    timestamp: t,
                    sensor_id: g.sensor_id.to_string(),
                    true_value: g.base + g.amplitude * phase.sin(),
                });
                t += spec.period_ms;
            }
        }
        rows.sort_by_key(|r| r.timestamp);
        rows
    }

    /// Emits readings in timestamp order. Identical scenario and seed give
    /// identical streams.
    pub fn run<F: FnMut(RawReading)>(&self, options: RunOptions, mut sink: F) -> RunSummary {
        self.run_until(options, &AtomicBool::new(false), |r| {
            sink(r);
            ControlFlow::Continue(())
        })
    }

    /// Like [`run`](Self::run), but stops early when `stop` is set or the
    /// sink breaks.
    pub fn run_until<F>(&self, options: RunOptions, stop: &AtomicBool, mut sink: F) -> RunSummary
    where
        F: FnMut(RawReading) -> ControlFlow<()>,
    {
        let by_id: HashMap<String, &SensorSpec> =
            self.sensors.iter().map(|s| (s.id.to_string(), s)).collect();
        let mut summary = RunSummary {
            emitted: 0,
            dropped: self.malformed_rows,
        };
        let started = Instant::now();
        let timeline = self.timeline();
        let resume_from = options.skip_through;
        let origin = timeline
            .iter()
            .map(|r| r.timestamp)
            .find(|t| resume_from.is_none_or(|s| *t > s))
            .unwrap_or(0);
        for (index, row) in timeline.iter().enumerate() {
            if stop.load(Ordering::Relaxed) {
                break;
            }
            if resume_from.is_some_and(|s| row.timestamp <= s) {
                continue;
            }
            let Some(spec) = by_id.get(&row.sensor_id) else {
                summary.dropped += 1;
                continue;
            };
            if let Some(rate) = options.rate.filter(|r| *r > 0.0) {
                let due = Duration::from_secs_f64((row.timestamp - origin) as f64 / 1000.0 / rate);
                while let Some(wait) = due.checked_sub(started.elapsed()) {
                    if wait.is_zero() || stop.load(Ordering::Relaxed) {
                        break;
                    }
                    thread::sleep(wait.min(PACE_SLICE));
                }
                if stop.load(Ordering::Relaxed) {
                    break;
                }
            }
            let seed = splitmix64(options.seed ^ splitmix64(index as u64));
            match sample(spec, row.true_value, row.timestamp, seed, &self.adc) {
                Ok(reading) => {
                    summary.emitted += 1;
                    if sink(reading).is_break() {
                        break;
                    }
                }
                Err(_) => summary.dropped += 1,
            }
        }
        summary
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read_config_file(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        parse_scenario(text)
    }
}

pub fn run_scenario<F: FnMut(RawReading)>(
    s: &Scenario,
    options: RunOptions,
    sink: F,
) -> RunSummary {
    s.run(options, sink)
}

const SENSOR_HEADER: &str = "id,kind,quantity,v0,y0,v1,y1,lat,lon,period_ms,noise_sd";
const SAMPLE_HEADER: &str = "timestamp_ms,sensor_id,true_value";
const GENERATOR_HEADER: &str = "sensor_id,base,amplitude,cycle_ms";

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Scenario,
    Sensors,
    Samples,
    Generators,
}

fn bad(line: usize, reason: impl std::fmt::Display) -> ConfigError {
    ConfigError::invalid("scenario", format!("line {line}: {reason}"))
}

fn num<T: std::str::FromStr>(line: usize, name: &str, text: &str) -> Result<T, ConfigError> {
    text.trim()
        .parse()
        .map_err(|_| bad(line, format!("{name} {text:?} is not a number")))
}

fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let mut scenario = Scenario::empty();
    let s = &mut scenario;
    let mut section = Section::None;
    let mut expect_header = false;
    let mut last_ts: HashMap<String, TimestampMs> = HashMap::new();

    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name.trim() {
                "scenario" => Section::Scenario,
                "sensors" => Section::Sensors,
                "samples" => Section::Samples,
                "generators" => Section::Generators,
                other => return Err(bad(n, format!("unknown section [{other}]"))),
            };
            expect_header = section != Section::Scenario;
            continue;
        }
        if expect_header {
            let header = match section {
                Section::Sensors => SENSOR_HEADER,
                Section::Samples => SAMPLE_HEADER,
                _ => GENERATOR_HEADER,
            };
            let got: String = line.chars().filter(|c| !c.is_whitespace()).collect();
            let ok = got == header
                || (section == Section::Sensors && got == format!("{header},decimals"));
            if !ok {
                return Err(bad(n, format!("expected header {header:?}")));
            }
            expect_header = false;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        match section {
            Section::None => return Err(bad(n, "content before the first section")),
            Section::Scenario => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| bad(n, "expected key=value"))?;
                match key.trim() {
                    "duration_ms" => s.duration_ms = num(n, "duration_ms", value)?,
                    "adc_bits" => {
                        let bits: u32 = num(n, "adc_bits", value)?;
                        if !(1..=24).contains(&bits) {
                            return Err(bad(n, "adc_bits must be in 1..=24"));
                        }
                        s.adc.bits = bits;
                    }
                    "vref" => {
                        let vref: f64 = num(n, "vref", value)?;
                        if !(vref > 0.0 && vref.is_finite()) {
                            return Err(bad(n, "vref must be positive"));
                        }
                        s.adc.vref = vref;
                    }
                    other => return Err(bad(n, format!("unknown key {other:?}"))),
                }
            }
            Section::Sensors => {
                if cols.len() != 11 && cols.len() != 12 {
                    return Err(bad(n, "sensor rows need 11 or 12 columns"));
                }
                let id = SensorId::parse(cols[0]).map_err(|e| bad(n, e))?;
                let kind = match cols[1] {
                    "passive" => SensorKind::Passive,
                    "active" => SensorKind::Active,
                    other => return Err(bad(n, format!("kind {other:?} is not passive|active"))),
                };
                let calibration = Calibration::new(
                    num(n, "v0", cols[3])?,
                    num(n, "y0", cols[4])?,
                    num(n, "v1", cols[5])?,
                    num(n, "y1", cols[6])?,
                )
                .map_err(|e| bad(n, e))?;
                let location = GeoLocation::new(num(n, "lat", cols[7])?, num(n, "lon", cols[8])?)
                    .map_err(|e| bad(n, e))?;
                let spec = SensorSpec {
                    id,
                    kind,
                    quantity: cols[2].to_string(),
                    calibration,
                    location,
                    period_ms: num(n, "period_ms", cols[9])?,
                    noise_sd: num(n, "noise_sd", cols[10])?,
                    decimals: match cols.get(11) {
                        Some(d) => num(n, "decimals", d)?,
                        None => DEFAULT_DECIMALS,
                    },
                };
                spec.validate().map_err(|e| bad(n, e))?;
                if s.sensor(&spec.id).is_some() {
                    return Err(bad(n, format!("sensor {} declared twice", spec.id)));
                }
                s.sensors.push(spec);
            }
            Section::Samples => {
                let parsed = (cols.len() == 3)
                    .then(|| {
                        let ts = cols[0].parse::<TimestampMs>().ok()?;
                        let v = cols[2].parse::<f64>().ok().filter(|v| v.is_finite())?;
                        Some((ts, v))
                    })
                    .flatten();
                let Some((timestamp, true_value)) = parsed else {
                    s.malformed_rows += 1;
                    continue;
                };
                let previous = last_ts.insert(cols[1].to_string(), timestamp);
                if previous.is_some_and(|p| p > timestamp) {
                    return Err(bad(
                        n,
                        format!("timestamps for {} must not decrease", cols[1]),
                    ));
                }
                s.script.push(ScriptRow {
                    timestamp,
                    sensor_id: cols[1].to_string(),
                    true_value,
                });
            }
            Section::Generators => {
                if cols.len() != 4 {
                    return Err(bad(n, "generator rows need 4 columns"));
                }
                let sensor_id = SensorId::parse(cols[0]).map_err(|e| bad(n, e))?;
                if s.sensor(&sensor_id).is_none() {
                    return Err(bad(
                        n,
                        format!("generator for undeclared sensor {sensor_id}"),
                    ));
                }
                s.generators.push(Generator {
                    sensor_id,
                    base: num(n, "base", cols[1])?,
                    amplitude: num(n, "amplitude", cols[2])?,
                    cycle_ms: num(n, "cycle_ms", cols[3])?,
                });
            }
        }
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn thermometer(noise_sd: f64) -> SensorSpec {
        SensorSpec {
            id: SensorId::parse("TEMP102AGR").unwrap(),
            kind: SensorKind::Passive,
            quantity: "temperature".into(),
            calibration: Calibration::new(0.0, 0.0, 5.0, 100.0).unwrap(),
            location: GeoLocation::new(31.95, 35.91).unwrap(),
            period_ms: 1000,
            noise_sd,
            decimals: 2,
        }
    }

    #[test]
    fn noiseless_sample_inverts_calibration() {
        let r = sample(&thermometer(0.0), 36.78, 0, 7, &AdcConfig::default()).unwrap();
        // 36.78 * 5 / 100 by hand.
        assert!((r.voltage - 1.839).abs() < 1e-12, "{}", r.voltage);
        assert_eq!(r.adc_counts, (1.839_f64 / 5.0 * 1023.0).round() as u32);
    }

    #[test]
    fn calibration_endpoint_maps_to_v0() {
        let r = sample(&thermometer(0.0), 0.0, 0, 0, &AdcConfig::default()).unwrap();
        assert_eq!(r.voltage, 0.0);
        assert_eq!(r.adc_counts, 0);
    }

    #[test]
    fn above_calibrated_range_is_rejected() {
        let err = sample(&thermometer(0.0), 100.5, 0, 0, &AdcConfig::default()).unwrap_err();
        assert!(matches!(err, SimError::OutOfRange { .. }));
    }

    #[test]
    fn noise_depends_only_on_seed() {
        let spec = thermometer(0.5);
        let adc = AdcConfig::default();
        let a = sample(&spec, 30.0, 0, 42, &adc).unwrap();
        let b = sample(&spec, 30.0, 0, 42, &adc).unwrap();
        let c = sample(&spec, 30.0, 0, 43, &adc).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.voltage, c.voltage);
    }

    #[test]
    fn degenerate_calibration_rejected() {
        assert!(Calibration::new(1.0, 0.0, 1.0, 10.0).is_err());
    }

    const SCENARIO: &str = "\
[scenario]
duration_ms=3000

[sensors]
id,kind,quantity,v0,y0,v1,y1,lat,lon,period_ms,noise_sd
TEMP102AGR,passive,temperature,0,0,5,100,31.95,35.91,1000,0.2
SOIL7AGR,active,soil_moisture,0,0,5,100,31.95,35.91,500,0

[samples]
timestamp_ms,sensor_id,true_value
2500,TEMP102AGR,36.78
100,SOIL7AGR,23.45
oops,SOIL7AGR,1
200,GHOST1AGR,5

[generators]
sensor_id,base,amplitude,cycle_ms
SOIL7AGR,40,5,3000
";

    #[test]
    fn parses_and_runs_in_timestamp_order() {
        let s = Scenario::parse(SCENARIO).unwrap();
        assert_eq!(s.sensors.len(), 2);
        assert_eq!(s.sensors[1].kind, SensorKind::Active);
        assert_eq!(s.malformed_rows, 1);
        let mut out = Vec::new();
        let summary = s.run(RunOptions::default(), |r| out.push(r));
        // 2 scripted + 6 generated emitted; malformed + unknown sensor dropped.
        assert_eq!(
            summary,
            RunSummary {
                emitted: 8,
                dropped: 2
            }
        );
        assert!(out.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn same_seed_same_stream() {
        let s = Scenario::parse(SCENARIO).unwrap();
        let run = |seed| {
            let mut out = Vec::new();
            s.run(RunOptions::seeded(seed), |r| {
                out.push(serde_json::to_string(&r).unwrap())
            });
            out.join("\n")
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn empty_script_emits_nothing() {
        assert_eq!(
            Scenario::empty().run(RunOptions::default(), |_| {}),
            RunSummary {
                emitted: 0,
                dropped: 0
            }
        );
    }

    #[test]
    fn rejects_decreasing_timestamps_per_sensor() {
        let text = "[sensors]\n".to_string()
            + SENSOR_HEADER
            + "\nPH1AGR,passive,ph,0,0,5,14,0,0,1000,0\n[samples]\n"
            + SAMPLE_HEADER
            + "\n20,PH1AGR,6\n10,PH1AGR,6\n";
        assert!(Scenario::parse(&text).is_err());
    }

    #[test]
    fn rejects_bad_header_and_sections() {
        assert!(Scenario::parse("[sensors]\nid,kind\n").is_err());
        assert!(Scenario::parse("[weather]\n").is_err());
        assert!(Scenario::parse("1,2,3\n").is_err());
    }
}
