//! Experiment definitions: a sectioned key/value document is parsed into a
//! raw map, overridden, validated into typed sections (collecting every
//! violation), and assembled into the engine inputs.

mod build;
mod config;

pub use build::{stationary_birth_rate, ValidatedScenario};
pub use config::{
    BirthSpec, InitialSpec, MarketSection, McSection, MortalitySpec, OutputSection, PensionSection, PopulationSection,
    ScenarioConfig, ShiftSection, TimeSection, ZProcessSection, ZuSection,
};

use std::collections::BTreeMap;
use std::fmt;

pub const SECTIONS: [&str; 9] = ["time", "mc", "market", "zu", "z_process", "shift", "population", "pension", "outputs"];

/// One violated rule, addressed by `section.key`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Section name to key/value pairs, as written.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawScenario {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawScenario {
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections.entry(section.to_string()).or_default().insert(key.to_string(), value.into());
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::new(spec, "override must have the form section.key=value"))?;
        let path = path.trim();
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| ConfigError::new(path, "override key must be section.key"))?;
        if !SECTIONS.contains(&section) {
            return Err(ConfigError::new(path, format!("unknown section '{section}'")));
        }
        self.set(section, key, value.trim());
        Ok(())
    }
}

/// Parses the sectioned document. Keys outside a section, unknown sections
/// and repeated keys are errors.
pub fn parse(text: &str) -> Result<RawScenario, Vec<ConfigError>> {
    let doc = ini::Ini::load_from_str_noescape(text).map_err(|e| vec![ConfigError::new(format!("line {}", e.line), e.msg.to_string())])?;
    let mut raw = RawScenario::default();
    let mut errors = Vec::new();
    for (section, props) in doc.iter() {
        let Some(section) = section else {
            for (k, _) in props.iter() {
                errors.push(ConfigError::new(k, "key outside any section"));
            }
            continue;
        };
        if !SECTIONS.contains(&section) {
            errors.push(ConfigError::new(section, "unknown section"));
            continue;
        }
        let entry = raw.sections.entry(section.to_string()).or_default();
        for (k, v) in props.iter() {
            if entry.insert(k.to_string(), v.trim().to_string()).is_some() {
                errors.push(ConfigError::new(format!("{section}.{k}"), "key given more than once"));
            }
        }
    }
    if errors.is_empty() {
        Ok(raw)
    } else {
        Err(errors)
    }
}

/// Parses, applies overrides in order, and validates.
pub fn load(text: &str, overrides: &[String]) -> Result<ValidatedScenario, Vec<ConfigError>> {
    let mut raw = parse(text)?;
    let mut errors = Vec::new();
    for o in overrides {
        if let Err(e) = raw.apply_override(o) {
            errors.push(e);
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    ValidatedScenario::from_raw(&raw)
}
