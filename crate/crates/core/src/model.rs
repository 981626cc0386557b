//! Trained-model files.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demonstrations::Task;
use crate::design_space::FeatureVector;
use crate::irl::{Hyperparams, TrainedTheta, TrainingDiagnostics};
use crate::reward::{CostTable, RewardError, RewardModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model was trained on space {found}, expected {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// On-disk form of a trained per-task reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub task: Task,
    pub theta: FeatureVector,
    pub lambda: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub hyperparams: Hyperparams,
    pub diagnostics: TrainingDiagnostics,
    pub space_fingerprint: String,
}

impl ModelFile {
    pub fn from_trained(trained: TrainedTheta, hyperparams: Hyperparams, lambda: f64, gamma: f64, space_fingerprint: &str) -> Self {
        ModelFile {
            task: trained.task,
            theta: trained.theta,
            lambda,
            gamma,
            horizon: trained.horizon,
            hyperparams,
            diagnostics: trained.diagnostics,
            space_fingerprint: space_fingerprint.to_string(),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ModelError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn check_space(&self, fingerprint: &str) -> Result<(), ModelError> {
        if self.space_fingerprint == fingerprint {
            Ok(())
        } else {
            Err(ModelError::FingerprintMismatch { expected: fingerprint.to_string(), found: self.space_fingerprint.clone() })
        }
    }

    pub fn reward_model(&self, costs: CostTable) -> Result<RewardModel, ModelError> {
        Ok(RewardModel::new(self.task.clone(), self.theta, costs, self.lambda, self.gamma)?)
    }
}
