//! Machine-readable run reports.
//!
//! Every CLI command emits one JSON report on stdout. The schema is stable:
//! fixed top-level fields, command-specific payload under `outputs`, and
//! sorted object keys (serde_json's default map), so identical inputs give
//! byte-identical reports.

use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    /// Subcommand that produced the report.
    pub command: String,
    /// Echo of the parameters the command ran with.
    pub inputs: Value,
    /// Command-specific payload.
    pub outputs: Value,
    /// Crate version, for provenance.
    pub version: String,
    /// Echoed RNG seed where the command is stochastic.
    pub seed: Option<u64>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            inputs: Value::Object(Map::new()),
            outputs: Value::Object(Map::new()),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(mut self, key: &str, value: impl Serialize) -> Self {
        if let Value::Object(map) = &mut self.inputs {
            map.insert(key.to_string(), json!(value));
        }
        self
    }

    pub fn output(mut self, key: &str, value: impl Serialize) -> Self {
        if let Value::Object(map) = &mut self.outputs {
            map.insert(key.to_string(), json!(value));
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
