#![allow(dead_code)]

use std::path::{Path, PathBuf};

use semfarm_gateway::GatewayConfig;
use serde_json::{json, Value};

pub const TEMP_WIRE: &str = r#"{"sensor_id":"TEMP102AGR","quantity":"temperature","value":36.78,"unit":"Celsius","timestamp":1000,"lat":31.95,"lon":35.91,"description":"Ambient temperature","keywords":["temperature"],"confidence":1}"#;

pub fn core_data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .canonicalize()
        .unwrap()
}

pub fn plot_scenario() -> PathBuf {
    core_data().join("scenarios/plot.scn")
}

/// Config JSON for a gateway whose data directory is `dir/var`.
pub fn config_json(dir: &Path, overrides: Value) -> Value {
    let d = core_data();
    let mut c = json!({
        "listen_port": 0,
        "data_dir": dir.join("var"),
        "ontology_path": d.join("ontology.json"),
        "lexicon_path": d.join("lexicon.json"),
        "rules_path": d.join("rules.json"),
        "fuzzy_path": d.join("fuzzy.json"),
        "bayes_path": d.join("bayes.json"),
        "cases_path": d.join("cases.json"),
        "seed": 7
    });
    for (k, v) in overrides.as_object().unwrap() {
        if v.is_null() {
            c.as_object_mut().unwrap().remove(k);
        } else {
            c[k] = v.clone();
        }
    }
    c
}

pub fn write_config(dir: &Path, name: &str, overrides: Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, config_json(dir, overrides).to_string()).unwrap();
    path
}

pub fn config(dir: &Path, overrides: Value) -> GatewayConfig {
    GatewayConfig::parse(&config_json(dir, overrides).to_string(), dir, |_| None).unwrap()
}

pub fn plot_config(dir: &Path) -> GatewayConfig {
    config(dir, json!({ "scenario_path": plot_scenario() }))
}
