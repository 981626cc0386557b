//! Shared defaults, loaded from `data/defaults.json`.

use serde::{Deserialize, Serialize};

use crate::demonstrations::TaskRegistry;
use crate::irl::Hyperparams;

const BUILTIN: &str = include_str!("../../../data/defaults.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueIterationConfig {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub gamma: f64,
    pub lambda: f64,
    pub tasks: TaskRegistry,
    pub training: Hyperparams,
    pub value_iteration: ValueIterationConfig,
}

impl Defaults {
    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

impl Default for Defaults {
    fn default() -> Self {
        Self::from_json(BUILTIN.as_bytes()).expect("bundled defaults.json is valid")
    }
}
