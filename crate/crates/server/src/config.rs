use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ENV_PORT: &str = "CHARTSEQ_PORT";
pub const ENV_MODEL_DIR: &str = "CHARTSEQ_MODEL_DIR";

/// Service configuration file. Relative paths are resolved against the
/// directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    pub model_dir: PathBuf,
    pub space_file: PathBuf,
    pub cost_file: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Append-only JSON-lines log of session events, replayed at startup.
    #[serde(default)]
    pub session_log: Option<PathBuf>,
}

fn default_port() -> u16 {
    8080
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let bytes = std::fs::read(path).map_err(|e| ServiceError::io(path, e))?;
        let mut config: ServiceConfig =
            serde_json::from_slice(&bytes).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_relative(base);
        Ok(config)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.model_dir);
        fix(&mut self.space_file);
        fix(&mut self.cost_file);
        if let Some(log) = &mut self.session_log {
            fix(log);
        }
    }

    /// Applies `CHARTSEQ_PORT` and `CHARTSEQ_MODEL_DIR` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(port) = lookup(ENV_PORT) {
            self.port = port
                .trim()
                .parse()
                .map_err(|_| ServiceError::Config(format!("{ENV_PORT}={port:?} is not a port number")))?;
        }
        if let Some(dir) = lookup(ENV_MODEL_DIR) {
            self.model_dir = PathBuf::from(dir);
        }
        Ok(())
    }
}
