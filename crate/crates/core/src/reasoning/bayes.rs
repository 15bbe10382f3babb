//! Three-node Bayesian network for soil moisture management with exact
//! inference by enumeration of the joint.
//!
//! ```text
//! Weather ──┐
//!           ├──> SoilMoisture
//! Irrigation┘
//! ```
//!
//! Network file layout (JSON):
//!
//! ```json
//! {
//!   "weather": { "rain": 0.7, "no_rain": 0.3 },
//!   "irrigation": { "on": 0.6, "off": 0.4 },
//!   "soil_moisture": [
//!     { "weather": "rain", "irrigation": "on", "low": 0.05, "adequate": 0.70, "high": 0.25 }
//!   ]
//! }
//! ```
//!
//! `soil_moisture` must list all four parent combinations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{read_config_file, ConfigError};

pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weather {
    Rain,
    NoRain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Irrigation {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moisture {
    Low,
    Adequate,
    High,
}

impl Weather {
    pub const ALL: [Weather; 2] = [Weather::Rain, Weather::NoRain];
    pub fn as_str(self) -> &'static str {
        match self {
            Weather::Rain => "rain",
            Weather::NoRain => "no_rain",
        }
    }
}

impl Irrigation {
    pub const ALL: [Irrigation; 2] = [Irrigation::On, Irrigation::Off];
    pub fn as_str(self) -> &'static str {
        match self {
            Irrigation::On => "on",
            Irrigation::Off => "off",
        }
    }
}

impl Moisture {
    pub const ALL: [Moisture; 3] = [Moisture::Low, Moisture::Adequate, Moisture::High];
    pub fn as_str(self) -> &'static str {
        match self {
            Moisture::Low => "low",
            Moisture::Adequate => "adequate",
            Moisture::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Weather,
    Irrigation,
    SoilMoisture,
}

/// Hard evidence: any subset of the nodes fixed to a state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BnEvidence {
    #[serde(default)]
    pub weather: Option<Weather>,
    #[serde(default)]
    pub irrigation: Option<Irrigation>,
    #[serde(default)]
    pub soil_moisture: Option<Moisture>,
}

/// Posterior over one node's states, in the node's declared state order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub node: Node,
    pub probabilities: Vec<(&'static str, f64)>,
}

impl Distribution {
    pub fn get(&self, state: &str) -> Option<f64> {
        self.probabilities
            .iter()
            .find(|(s, _)| *s == state)
            .map(|(_, p)| *p)
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().map(|(_, p)| p).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BnError {
    #[error("evidence has probability zero")]
    InconsistentEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BayesNet {
    /// P(Weather) as [rain, no_rain].
    weather: [f64; 2],
    /// P(Irrigation) as [on, off].
    irrigation: [f64; 2],
    /// P(SoilMoisture | Weather, Irrigation) as [weather][irrigation][moisture].
    cpt: [[[f64; 3]; 2]; 2],
}

fn check_distribution(what: &str, ps: &[f64]) -> Result<(), ConfigError> {
    if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(ConfigError::invalid(
            "bayes net",
            format!("{what}: probability outside [0, 1]"),
        ));
    }
    let total: f64 = ps.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(ConfigError::invalid(
            "bayes net",
            format!("{what}: sums to {total}"),
        ));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetFile {
    weather: WeatherPrior,
    irrigation: IrrigationPrior,
    soil_moisture: Vec<CptRow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeatherPrior {
    rain: f64,
    no_rain: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IrrigationPrior {
    on: f64,
    off: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CptRow {
    weather: Weather,
    irrigation: Irrigation,
    low: f64,
    adequate: f64,
    high: f64,
}

const BUNDLED: &str = include_str!("../../data/bayes.json");

impl BayesNet {
    pub fn new(
        p_rain: f64,
        p_irrigation_on: f64,
        cpt: [[[f64; 3]; 2]; 2],
    ) -> Result<Self, ConfigError> {
        let weather = [p_rain, 1.0 - p_rain];
        let irrigation = [p_irrigation_on, 1.0 - p_irrigation_on];
        Self::from_parts(weather, irrigation, cpt)
    }

    fn from_parts(
        weather: [f64; 2],
        irrigation: [f64; 2],
        cpt: [[[f64; 3]; 2]; 2],
    ) -> Result<Self, ConfigError> {
        check_distribution("P(Weather)", &weather)?;
        check_distribution("P(Irrigation)", &irrigation)?;
        for w in Weather::ALL {
            for i in Irrigation::ALL {
                let row = cpt[w as usize][i as usize];
                check_distribution(
                    &format!("P(SoilMoisture | {}, {})", w.as_str(), i.as_str()),
                    &row,
                )?;
            }
        }
        Ok(Self {
            weather,
            irrigation,
            cpt,
        })
    }

    /// P(rain)=0.7 and P(on)=0.6 with the shipped default CPT.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled network is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&read_config_file(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let file: NetFile =
            serde_json::from_str(text).map_err(|e| ConfigError::parse("bayes net", e))?;
        let mut cpt = [[[f64::NAN; 3]; 2]; 2];
        for row in &file.soil_moisture {
            let slot = &mut cpt[row.weather as usize][row.irrigation as usize];
            if !slot[0].is_nan() {
                return Err(ConfigError::invalid(
                    "bayes net",
                    format!(
                        "duplicate CPT row for ({}, {})",
                        row.weather.as_str(),
                        row.irrigation.as_str()
                    ),
                ));
            }
            *slot = [row.low, row.adequate, row.high];
        }
        if cpt.iter().flatten().any(|r| r[0].is_nan()) {
            return Err(ConfigError::invalid(
                "bayes net",
                "CPT must cover all four parent states",
            ));
        }
        Self::from_parts(
            [file.weather.rain, file.weather.no_rain],
            [file.irrigation.on, file.irrigation.off],
            cpt,
        )
    }

    pub fn p_weather(&self, w: Weather) -> f64 {
        self.weather[w as usize]
    }

    pub fn p_irrigation(&self, i: Irrigation) -> f64 {
        self.irrigation[i as usize]
    }

    pub fn p_moisture(&self, m: Moisture, w: Weather, i: Irrigation) -> f64 {
        self.cpt[w as usize][i as usize][m as usize]
    }

    /// Joint probability of one full assignment.
    pub fn joint(&self, w: Weather, i: Irrigation, m: Moisture) -> f64 {
        self.p_weather(w) * self.p_irrigation(i) * self.p_moisture(m, w, i)
    }

    /// Posterior of `target` given hard evidence, by summing the joint over
    /// all 2 × 2 × 3 assignments consistent with the evidence.
    pub fn query(&self, target: Node, evidence: &BnEvidence) -> Result<Distribution, BnError> {
        // With both parents fixed the posterior is the CPT row itself;
        // returning it directly avoids renormalization rounding.
        if let (Node::SoilMoisture, Some(w), Some(i), None) = (
            target,
            evidence.weather,
            evidence.irrigation,
            evidence.soil_moisture,
        ) {
            let row = self.cpt[w as usize][i as usize];
            return Ok(Distribution {
                node: target,
                probabilities: Moisture::ALL
                    .iter()
                    .map(|m| (m.as_str(), row[*m as usize]))
                    .collect(),
            });
        }
        self.query_weighted(target, evidence, [1.0; 3])
    }

    /// Like [`query`](Self::query), additionally weighting each moisture state
    /// by a likelihood (soft evidence on SoilMoisture).
    pub fn query_weighted(
        &self,
        target: Node,
        evidence: &BnEvidence,
        moisture_likelihood: [f64; 3],
    ) -> Result<Distribution, BnError> {
        let states: Vec<&'static str> = match target {
            Node::Weather => Weather::ALL.iter().map(|w| w.as_str()).collect(),
            Node::Irrigation => Irrigation::ALL.iter().map(|i| i.as_str()).collect(),
            Node::SoilMoisture => Moisture::ALL.iter().map(|m| m.as_str()).collect(),
        };
        let mut mass = vec![0.0; states.len()];
        for w in Weather::ALL {
            if evidence.weather.is_some_and(|e| e != w) {
                continue;
            }
            for i in Irrigation::ALL {
                if evidence.irrigation.is_some_and(|e| e != i) {
                    continue;
                }
                for m in Moisture::ALL {
                    if evidence.soil_moisture.is_some_and(|e| e != m) {
                        continue;
                    }
                    let p = self.joint(w, i, m) * moisture_likelihood[m as usize];
                    let slot = match target {
                        Node::Weather => w as usize,
                        Node::Irrigation => i as usize,
                        Node::SoilMoisture => m as usize,
                    };
                    mass[slot] += p;
                }
            }
        }
        let z: f64 = mass.iter().sum();
        if z <= 0.0 {
            return Err(BnError::InconsistentEvidence);
        }
        Ok(Distribution {
            node: target,
            probabilities: states
                .into_iter()
                .zip(mass.into_iter().map(|p| p / z))
                .collect(),
        })
    }
}

pub fn bn_query(
    net: &BayesNet,
    target: Node,
    evidence: &BnEvidence,
) -> Result<Distribution, BnError> {
    net.query(target, evidence)
}
