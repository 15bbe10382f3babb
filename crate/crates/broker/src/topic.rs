use std::fmt;
use std::str::FromStr;

use semfarm_core::SensorId;
use thiserror::Error;

const PREFIX: &str = "farm";
const MAX_NUMBER: u16 = 9999;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed topic pattern {pattern:?}: {reason}")]
pub struct TopicError {
    pub pattern: String,
    pub reason: &'static str,
}

/// `farm/<application>/<job>/<number|*>`. Only the number may be a wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topic {
    application: String,
    job: String,
    number: Option<u16>,
}

fn is_code(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_uppercase())
}

impl Topic {
    /// Pattern for one application and job; `None` matches every number.
    pub fn new(application: &str, job: &str, number: Option<u16>) -> Result<Self, TopicError> {
        let err = |reason| TopicError {
            pattern: format!(
                "{PREFIX}/{application}/{job}/{}",
                number.map_or("*".to_string(), |n| n.to_string())
            ),
            reason,
        };
        if !is_code(application) {
            return Err(err("application must be uppercase letters"));
        }
        if !is_code(job) {
            return Err(err("job must be uppercase letters"));
        }
        if number.is_some_and(|n| n == 0 || n > MAX_NUMBER) {
            return Err(err("number outside 1..=9999"));
        }
        Ok(Self {
            application: application.to_string(),
            job: job.to_string(),
            number,
        })
    }

    /// The concrete topic a sensor publishes on.
    pub fn of(id: &SensorId) -> Self {
        Self {
            application: id.application().to_string(),
            job: id.job().to_string(),
            number: Some(id.number()),
        }
    }

    pub fn parse(pattern: &str) -> Result<Self, TopicError> {
        let err = |reason| TopicError {
            pattern: pattern.to_string(),
            reason,
        };
        let parts: Vec<&str> = pattern.split('/').collect();
        let [prefix, app, job, number] = parts[..] else {
            return Err(err("expected four '/'-separated segments"));
        };
        if prefix != PREFIX {
            return Err(err("must start with farm/"));
        }
        let number = match number {
            "*" => None,
            digits
                if !digits.is_empty()
                    && digits.bytes().all(|b| b.is_ascii_digit())
                    && !digits.starts_with('0') =>
            {
                Some(digits.parse::<u16>().map_err(|_| err("number too large"))?)
            }
            _ => return Err(err("number must be digits without leading zero, or *")),
        };
        Self::new(app, job, number).map_err(|e| err(e.reason))
    }

    pub fn application(&self) -> &str {
        &self.application
    }

    pub fn job(&self) -> &str {
        &self.job
    }

    pub fn number(&self) -> Option<u16> {
        self.number
    }

    pub fn is_wildcard(&self) -> bool {
        self.number.is_none()
    }

    pub fn matches(&self, id: &SensorId) -> bool {
        self.application == id.application()
            && self.job == id.job()
            && self.number.is_none_or(|n| n == id.number())
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{PREFIX}/{}/{}/", self.application, self.job)?;
        match self.number {
            Some(n) => write!(f, "{n}"),
            None => f.write_str("*"),
        }
    }
}

impl FromStr for Topic {
    type Err = TopicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}
