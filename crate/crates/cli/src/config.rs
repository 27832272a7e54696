//! Scenario configuration files: a named base scenario, overrides on top of
//! it, and output selection.
//!
//! A config file is TOML. `scenario = "<name>"` picks the base; every other
//! top-level key except `outputs` overrides the link configuration. Tables
//! merge key by key, except tables carrying a `kind` tag (drift models,
//! pulse shapes), which replace the base value as a whole.

use std::path::Path;

use cohrx_core::link::LinkConfig;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::scenarios::{self, ScenarioKind};

/// Which artifact formats a command writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outputs {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { csv: true, json: true, svg: true }
    }
}

impl Outputs {
    /// Parses a comma-separated list such as `csv,json`.
    pub fn parse_list(list: &str) -> CliResult<Self> {
        let mut out = Self { csv: false, json: false, svg: false };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "csv" => out.csv = true,
                "json" => out.json = true,
                "svg" => out.svg = true,
                other => return Err(CliError::Usage(format!("unknown output format '{other}' (expected csv, json, svg)"))),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    /// Set when the configuration derives from a built-in scenario.
    pub kind: Option<ScenarioKind>,
    pub link: LinkConfig,
    pub outputs: Outputs,
}

impl ScenarioConfig {
    pub fn seed(&self) -> u64 {
        self.link.seed
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.link)
    }
}

/// SHA-256 of the canonical JSON form of the link configuration. The seed is
/// reported separately and does not enter the hash.
pub fn config_hash(link: &LinkConfig) -> String {
    let unseeded = LinkConfig { seed: 0, ..link.clone() };
    let text = serde_json::to_string(&unseeded).expect("link configuration serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Overlays `over` onto `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if !o.contains_key("kind") => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Replaces the value at a dotted path such as `laser.linewidth`.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> CliResult<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(usage(format!("parameter path '{path}' does not resolve: '{}' is not a table", parts[..i].join("."))));
        };
        let Some(next) = map.get_mut(*part) else {
            return Err(usage(format!("parameter path '{path}' does not resolve: no key '{part}'")));
        };
        node = next;
    }
    merge(node, value);
    Ok(())
}

/// Parses one TOML value written on the command line, e.g. `1e5`, `true`
/// or `{ kind = "none" }`.
pub fn parse_value(text: &str) -> CliResult<Value> {
    let doc: toml::Table = format!("v = {text}").parse().map_err(|e| usage(format!("cannot parse value '{text}': {e}")))?;
    serde_json::to_value(&doc["v"]).map_err(|e| usage(e.to_string()))
}

pub fn link_from_value(value: Value) -> CliResult<LinkConfig> {
    serde_json::from_value(value).map_err(|e| usage(format!("invalid configuration: {e}")))
}

pub fn link_to_value(link: &LinkConfig) -> Value {
    serde_json::to_value(link).expect("link configuration serializes")
}

/// Builds the effective configuration from an optional file, an optional
/// scenario name (overriding the file's) and an optional seed override.
pub fn load(path: Option<&Path>, scenario: Option<&str>, seed: Option<u64>) -> CliResult<ScenarioConfig> {
    let mut overrides = Map::new();
    let mut file_scenario = None;
    let mut outputs = Outputs::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let table: toml::Table = text.parse().map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let Value::Object(mut map) = serde_json::to_value(table).map_err(|e| usage(e.to_string()))? else {
            unreachable!("a TOML document is a table");
        };
        if let Some(v) = map.remove("scenario") {
            file_scenario = Some(v.as_str().ok_or_else(|| usage("'scenario' must be a string"))?.to_owned());
        }
        if let Some(v) = map.remove("outputs") {
            let Value::Object(o) = v else { return Err(usage("'outputs' must be a table")) };
            for (k, v) in o {
                let on = v.as_bool().ok_or_else(|| usage(format!("outputs.{k} must be true or false")))?;
                match k.as_str() {
                    "csv" => outputs.csv = on,
                    "json" => outputs.json = on,
                    "svg" => outputs.svg = on,
                    other => return Err(usage(format!("unknown output format '{other}'"))),
                }
            }
        }
        overrides = map;
    }
    let name = scenario.map(str::to_owned).or(file_scenario);
    let (base, kind) = match &name {
        Some(n) => {
            let s = scenarios::find(n).ok_or_else(|| {
                let names: Vec<&str> = scenarios::SCENARIOS.iter().map(|s| s.name).collect();
                usage(format!("unknown scenario '{n}' (available: {})", names.join(", ")))
            })?;
            (s.config(), Some(s.kind))
        }
        None => (LinkConfig::default(), None),
    };
    // A config file names the run after itself; otherwise the scenario does.
    let label = match (path.and_then(|p| p.file_stem()), &name) {
        (Some(stem), _) => stem.to_string_lossy().into_owned(),
        (None, Some(n)) => n.clone(),
        (None, None) => "default".to_owned(),
    };
    let mut value = link_to_value(&base);
    merge(&mut value, Value::Object(overrides));
    let mut link = link_from_value(value)?;
    if let Some(seed) = seed {
        link.seed = seed;
    }
    link.validate().map_err(|e| usage(format!("invalid configuration: {e}")))?;
    Ok(ScenarioConfig { name: label, kind, link, outputs })
}
