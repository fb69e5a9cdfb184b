//! TOML configuration with dotted-key overrides.
//!
//! A config file must set `gains.Kp` and `gains.Kd`; every other section falls
//! back to its defaults. Without a file the built-in defaults are used as a
//! whole. Overrides are applied to the parsed table before it is typed, so an
//! override can set any key a file can.

use std::path::{Path, PathBuf};

use helidock_core::{
    ControllerGains, ControllerKind, DrogueParams, Pairing, PlantParams, ProbeGeometry, ReferenceParams, RunConfig,
    ScenarioParams, UncertaintyBounds,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}{}", line.map(|l| format!("line {l}: ")).unwrap_or_default(), message)]
    Parse { line: Option<usize>, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("bad override `{spec}`: {reason}")]
    Override { spec: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::n_runs")]
    pub n_runs: u64,
    #[serde(default = "defaults::controller")]
    pub controller: ControllerKind,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default = "defaults::docking_tolerance")]
    pub docking_tolerance: f64,
    #[serde(default = "defaults::horizon")]
    pub horizon: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
}

mod defaults {
    use helidock_core::{ControllerKind, RunConfig};

    pub fn seed() -> u64 {
        RunConfig::default().seed
    }
    pub fn n_runs() -> u64 {
        50
    }
    pub fn controller() -> ControllerKind {
        RunConfig::default().controller
    }
    pub fn docking_tolerance() -> f64 {
        RunConfig::default().docking_tolerance
    }
    pub fn horizon() -> f64 {
        RunConfig::default().horizon
    }
    pub fn dt() -> f64 {
        RunConfig::default().dt
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: defaults::seed(),
            n_runs: defaults::n_runs(),
            controller: defaults::controller(),
            pairing: Pairing::default(),
            docking_tolerance: defaults::docking_tolerance(),
            horizon: defaults::horizon(),
            dt: defaults::dt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub plant: PlantParams,
    pub gains: ControllerGains,
    #[serde(default)]
    pub geometry: ProbeGeometry,
    #[serde(default)]
    pub uncertainty: UncertaintyBounds,
    #[serde(default)]
    pub drogue: DrogueParams,
    #[serde(default)]
    pub reference: ReferenceParams,
    #[serde(default)]
    pub scenario: ScenarioParams,
}

impl CliConfig {
    /// Harness configuration for one seed and controller.
    pub fn run_config(&self, seed: u64, controller: ControllerKind) -> RunConfig {
        RunConfig {
            seed,
            stream: 0,
            controller,
            plant: self.plant,
            gains: self.gains,
            geometry: self.geometry,
            bounds: self.uncertainty,
            drogue: self.drogue,
            reference: self.reference,
            scenario: self.scenario,
            docking_tolerance: self.run.docking_tolerance,
            horizon: self.run.horizon,
            dt: self.run.dt,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run.n_runs == 0 {
            return Err(ConfigError::Invalid { key: "run.n_runs".into(), reason: "must be at least 1".into() });
        }
        self.run_config(self.run.seed, self.run.controller).validate().map_err(|e| match e {
            helidock_core::Error::InvalidParameter { key, reason } => ConfigError::Invalid { key, reason },
            other => ConfigError::Invalid { key: "config".into(), reason: other.to_string() },
        })
    }

    /// First 12 hex digits of the SHA-256 of the resolved config as JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..12].to_owned()
    }

    pub fn seed_range(&self) -> (u64, u64) {
        let first = self.run.seed;
        (first, first + self.run.n_runs - 1)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(text: &str, err: &toml::de::Error, key: Option<String>) -> ConfigError {
    let message = err.message().trim().to_owned();
    ConfigError::Parse {
        line: err.span().map(|s| line_of(text, s.start)),
        message: match key {
            Some(k) if !k.is_empty() && k != "." => format!("`{k}`: {message}"),
            _ => message,
        },
    }
}

/// Parses config text, reporting the key path and line of any schema error.
fn parse_file_text(text: &str) -> Result<Table, ConfigError> {
    let table: Table = text.parse().map_err(|e| parse_error(text, &e, None))?;
    for key in ["Kp", "Kd"] {
        let present = table.get("gains").and_then(Value::as_table).is_some_and(|g| g.contains_key(key));
        if !present {
            return Err(ConfigError::Missing(if key == "Kp" { "gains.Kp" } else { "gains.Kd" }));
        }
    }
    let de = toml::Deserializer::parse(text).map_err(|e| parse_error(text, &e, None))?;
    serde_path_to_error::deserialize::<_, CliConfig>(de).map_err(|e| {
        let key = e.path().to_string();
        parse_error(text, e.inner(), Some(key))
    })?;
    Ok(table)
}

fn parse_override_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

/// Applies `a.b.c=value`; bare words that are not TOML values are taken as strings.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let bad = |reason: &str| ConfigError::Override { spec: spec.to_owned(), reason: reason.to_owned() };
    let (path, raw) = spec.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let (leaf, parents) = keys.split_last().expect("split yields at least one key");
    let mut node = table;
    for key in parents {
        node = node
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| bad(&format!("`{key}` is not a section")))?;
    }
    node.insert(leaf.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

fn default_table() -> Table {
    match Value::try_from(CliConfig::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("default config serializes to a table"),
    }
}

/// Loads the config file (or defaults), applies overrides in order, and validates.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<CliConfig, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
            parse_file_text(&text)?
        }
        None => default_table(),
    };
    for spec in overrides {
        apply_override(&mut table, spec)?;
    }
    let config: CliConfig = serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        ConfigError::Invalid { key: e.path().to_string(), reason: e.inner().message().trim().to_owned() }
    })?;
    config.validate()?;
    Ok(config)
}
