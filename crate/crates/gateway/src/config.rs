//! Gateway configuration file (JSON object).
//!
//! ```json
//! {
//!   "listen_port": 8080,
//!   "data_dir": "var",
//!   "ontology_path": "data/ontology.json",
//!   "lexicon_path": "data/lexicon.json",
//!   "rules_path": "data/rules.json",
//!   "fuzzy_path": "data/fuzzy.json",
//!   "bayes_path": "data/bayes.json",
//!   "cases_path": "data/cases.json",
//!   "scenario_path": "data/plot.scn",
//!   "ticket_ttl_ms": 600000
//! }
//! ```
//!
//! Relative paths resolve against the directory holding the config file.
//! Optional keys: `cases_path`, `scenario_path`, `ticket_ttl_ms` (default
//! ten minutes), `bind_address` (default `127.0.0.1`), `replay_rate`
//! (real-time multiplier; omitted replays at full speed), `seed`,
//! `tcp_port` (enables the frame ingress), `application` (code used on
//! actuation topics, default `AGR`).
//!
//! `SEMFARM_LISTEN_PORT` and `SEMFARM_DATA_DIR` override the matching keys.

use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_TICKET_TTL_MS: u64 = 10 * 60 * 1000;
pub const ENV_LISTEN_PORT: &str = "SEMFARM_LISTEN_PORT";
pub const ENV_DATA_DIR: &str = "SEMFARM_DATA_DIR";

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub listen_port: u16,
    pub bind_address: IpAddr,
    pub data_dir: PathBuf,
    pub ontology_path: PathBuf,
    pub lexicon_path: PathBuf,
    pub rules_path: PathBuf,
    pub fuzzy_path: PathBuf,
    pub bayes_path: PathBuf,
    pub cases_path: Option<PathBuf>,
    pub scenario_path: Option<PathBuf>,
    pub ticket_ttl_ms: u64,
    pub replay_rate: Option<f64>,
    pub seed: u64,
    pub tcp_port: Option<u16>,
    pub application: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    listen_port: u16,
    #[serde(default)]
    bind_address: Option<IpAddr>,
    data_dir: PathBuf,
    ontology_path: PathBuf,
    lexicon_path: PathBuf,
    rules_path: PathBuf,
    fuzzy_path: PathBuf,
    bayes_path: PathBuf,
    #[serde(default)]
    cases_path: Option<PathBuf>,
    #[serde(default)]
    scenario_path: Option<PathBuf>,
    #[serde(default)]
    ticket_ttl_ms: Option<u64>,
    #[serde(default)]
    replay_rate: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tcp_port: Option<u16>,
    #[serde(default)]
    application: Option<String>,
}

impl GatewayConfig {
    /// Reads, resolves and checks a config file, applying environment
    /// overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, |k| std::env::var(k).ok())
    }

    /// `env` supplies override values by variable name.
    pub fn parse(
        text: &str,
        base: &Path,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigFileError> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| ConfigFileError::Parse(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let listen_port = match env(ENV_LISTEN_PORT) {
            Some(v) => v.trim().parse().map_err(|_| {
                ConfigFileError::Invalid(format!("{ENV_LISTEN_PORT}={v:?} is not a port"))
            })?,
            None => raw.listen_port,
        };
        let data_dir = match env(ENV_DATA_DIR) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => resolve(raw.data_dir),
        };
        let config = Self {
            listen_port,
            bind_address: raw.bind_address.unwrap_or(IpAddr::from([127, 0, 0, 1])),
            data_dir,
            ontology_path: resolve(raw.ontology_path),
            lexicon_path: resolve(raw.lexicon_path),
            rules_path: resolve(raw.rules_path),
            fuzzy_path: resolve(raw.fuzzy_path),
            bayes_path: resolve(raw.bayes_path),
            cases_path: raw.cases_path.map(resolve),
            scenario_path: raw.scenario_path.map(resolve),
            ticket_ttl_ms: raw.ticket_ttl_ms.unwrap_or(DEFAULT_TICKET_TTL_MS),
            replay_rate: raw.replay_rate,
            seed: raw.seed.unwrap_or(0),
            tcp_port: raw.tcp_port,
            application: raw.application.unwrap_or_else(|| "AGR".into()),
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), ConfigFileError> {
        let invalid = |m: String| Err(ConfigFileError::Invalid(m));
        if self.ticket_ttl_ms == 0 {
            return invalid("ticket_ttl_ms must be > 0".into());
        }
        if self
            .replay_rate
            .is_some_and(|r| !(r.is_finite() && r > 0.0))
        {
            return invalid("replay_rate must be a positive number".into());
        }
        if self.application.is_empty() || !self.application.bytes().all(|b| b.is_ascii_uppercase())
        {
            return invalid("application must be uppercase letters".into());
        }
        let required = [
            ("ontology_path", Some(&self.ontology_path)),
            ("lexicon_path", Some(&self.lexicon_path)),
            ("rules_path", Some(&self.rules_path)),
            ("fuzzy_path", Some(&self.fuzzy_path)),
            ("bayes_path", Some(&self.bayes_path)),
            ("cases_path", self.cases_path.as_ref()),
            ("scenario_path", self.scenario_path.as_ref()),
        ];
        for (key, path) in required {
            if let Some(p) = path {
                if !p.is_file() {
                    return invalid(format!("{key}: {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data")
    }

    fn text(extra: &str) -> String {
        format!(
            r#"{{"listen_port": 8080, "data_dir": "var",
            "ontology_path": "ontology.json", "lexicon_path": "lexicon.json",
            "rules_path": "rules.json", "fuzzy_path": "fuzzy.json",
            "bayes_path": "bayes.json"{extra}}}"#
        )
    }

    #[test]
    fn resolves_relative_paths_and_defaults() {
        let c = GatewayConfig::parse(&text(""), &data_dir(), |_| None).unwrap();
        assert_eq!(c.listen_port, 8080);
        assert_eq!(c.data_dir, data_dir().join("var"));
        assert_eq!(c.rules_path, data_dir().join("rules.json"));
        assert_eq!(c.ticket_ttl_ms, DEFAULT_TICKET_TTL_MS);
        assert_eq!(c.application, "AGR");
        assert!(c.scenario_path.is_none());
    }

    #[test]
    fn environment_overrides() {
        let env = |k: &str| match k {
            ENV_LISTEN_PORT => Some("9191".to_string()),
            ENV_DATA_DIR => Some("/tmp/semfarm-x".to_string()),
            _ => None,
        };
        let c = GatewayConfig::parse(&text(""), &data_dir(), env).unwrap();
        assert_eq!(c.listen_port, 9191);
        assert_eq!(c.data_dir, PathBuf::from("/tmp/semfarm-x"));
        let bad = |k: &str| (k == ENV_LISTEN_PORT).then(|| "http".to_string());
        assert!(GatewayConfig::parse(&text(""), &data_dir(), bad).is_err());
    }

    #[test]
    fn fails_fast_on_missing_files_and_bad_values() {
        let missing = text(r#", "scenario_path": "nope.scn""#);
        assert!(matches!(
            GatewayConfig::parse(&missing, &data_dir(), |_| None),
            Err(ConfigFileError::Invalid(_))
        ));
        let zero_ttl = text(r#", "ticket_ttl_ms": 0"#);
        assert!(GatewayConfig::parse(&zero_ttl, &data_dir(), |_| None).is_err());
        let unknown = text(r#", "colour": "red""#);
        assert!(matches!(
            GatewayConfig::parse(&unknown, &data_dir(), |_| None),
            Err(ConfigFileError::Parse(_))
        ));
    }
}
