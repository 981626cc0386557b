//! Task reward composed with perception costs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demonstrations::Task;
use crate::design_space::{dot, ActionFeatures, FeatureGraph, FeatureVector, StateFeatures, Transition};

pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_LAMBDA: f64 = 0.3;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("cost table has no entry for action kind(s): {}", .0.join(", "))]
    MissingKinds(Vec<String>),
    #[error("cost for {kind} must be a finite nonnegative number, got {cost}")]
    InvalidCost { kind: String, cost: f64 },
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("theta has non-finite components")]
    NonFiniteTheta,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Perception cost per parameter-erased action kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostTable(BTreeMap<String, f64>);

impl CostTable {
    pub fn new(costs: BTreeMap<String, f64>) -> Result<Self, RewardError> {
        for (kind, &cost) in &costs {
            if !(cost.is_finite() && cost >= 0.0) {
                return Err(RewardError::InvalidCost { kind: kind.clone(), cost });
            }
        }
        Ok(CostTable(costs))
    }

    /// Parses a JSON object `{kind: cost}`; only range checks apply.
    pub fn from_json(bytes: &[u8]) -> Result<Self, RewardError> {
        Self::new(serde_json::from_slice(bytes)?)
    }

    /// Same cost for every kind in `graph`.
    pub fn uniform(graph: &FeatureGraph, cost: f64) -> Self {
        CostTable(graph.action_kinds().into_iter().map(|k| (k, cost)).collect())
    }

    pub fn get(&self, kind: &str) -> Option<f64> {
        self.0.get(kind).copied()
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.0
    }

    pub fn check_complete(&self, graph: &FeatureGraph) -> Result<(), RewardError> {
        let missing: Vec<String> = graph.action_kinds().into_iter().filter(|k| !self.0.contains_key(k)).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(RewardError::MissingKinds(missing))
        }
    }
}

/// Parses a cost table and checks it covers every action kind of `graph`.
pub fn load_cost_table(bytes: &[u8], graph: &FeatureGraph) -> Result<CostTable, RewardError> {
    let table = CostTable::from_json(bytes)?;
    table.check_complete(graph)?;
    Ok(table)
}

/// `R(s, a, s') = θ·f_s + θ·f_a − λ·c(a)`, discounted over time by `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub task: Task,
    pub theta: FeatureVector,
    pub costs: CostTable,
    pub lambda: f64,
    pub gamma: f64,
}

impl RewardModel {
    pub fn new(task: Task, theta: FeatureVector, costs: CostTable, lambda: f64, gamma: f64) -> Result<Self, RewardError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(RewardError::OutOfRange { name: "lambda", value: lambda });
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(RewardError::OutOfRange { name: "gamma", value: gamma });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(RewardError::NonFiniteTheta);
        }
        Ok(RewardModel { task, theta, costs, lambda, gamma })
    }

    /// The λ = 0 variant: no perception term.
    pub fn task_only(&self) -> Self {
        RewardModel { lambda: 0.0, ..self.clone() }
    }

    /// θ = 0, λ = 1: ranks purely by negated perception cost.
    pub fn cost_only(&self) -> Self {
        RewardModel { theta: [0.0; crate::design_space::FEATURE_DIM], lambda: 1.0, ..self.clone() }
    }

    pub fn state_reward(&self, s: &StateFeatures) -> f64 {
        dot(&self.theta, &s.to_real())
    }

    pub fn action_reward(&self, a: &ActionFeatures) -> f64 {
        dot(&self.theta, &a.to_real())
    }

    /// Reward of taking `edge` out of a state with features `source`. The
    /// predecessor supplies the state term.
    pub fn transition_reward(&self, source: &StateFeatures, edge: &Transition) -> Result<f64, RewardError> {
        let kind = edge.action.kind_key();
        let cost = self.costs.get(&kind).ok_or(RewardError::MissingKinds(vec![kind]))?;
        Ok(self.state_reward(source) + self.action_reward(&edge.features) - self.lambda * cost)
    }

    /// Transition rewards for every edge, laid out like the adjacency lists.
    pub fn edge_rewards(&self, graph: &FeatureGraph) -> Result<Vec<Vec<f64>>, RewardError> {
        self.costs.check_complete(graph)?;
        (0..graph.num_states())
            .map(|s| {
                let f = graph.state_features(s);
                graph.out_edges(s).iter().map(|e| self.transition_reward(f, e)).collect()
            })
            .collect()
    }
}
