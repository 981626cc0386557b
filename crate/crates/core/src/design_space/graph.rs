use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{ActionFeatures, StateFeatures};
use super::{EditAction, SpaceError};

/// A labeled, deterministic transition out of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub action: EditAction,
    pub target: usize,
    pub features: ActionFeatures,
}

/// The numeric view of a design space: state features plus labeled edges.
///
/// Everything the learning and planning code needs lives here, so small
/// hand-built graphs can be used in place of an enumerated chart space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureGraph {
    states: Vec<StateFeatures>,
    edges: Vec<Vec<Transition>>,
}

impl FeatureGraph {
    /// Builds a graph, checking closure (every target is a state) and
    /// determinism (no action label repeats within a state's edges).
    pub fn new(states: Vec<StateFeatures>, edges: Vec<Vec<Transition>>) -> Result<Self, SpaceError> {
        if states.is_empty() {
            return Err(SpaceError::EmptySpace);
        }
        if edges.len() != states.len() {
            return Err(SpaceError::Malformed(format!(
                "{} states but {} adjacency lists",
                states.len(),
                edges.len()
            )));
        }
        for (source, out) in edges.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for t in out {
                if t.target >= states.len() {
                    return Err(SpaceError::Malformed(format!(
                        "edge {source} -[{}]-> {} leaves the space",
                        t.action, t.target
                    )));
                }
                if !seen.insert(&t.action) {
                    return Err(SpaceError::Malformed(format!(
                        "state {source} has two edges labeled {}",
                        t.action
                    )));
                }
            }
        }
        Ok(Self { states, edges })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn state_features(&self, state: usize) -> &StateFeatures {
        &self.states[state]
    }

    pub fn all_state_features(&self) -> &[StateFeatures] {
        &self.states
    }

    fn check_index(&self, state: usize) -> Result<(), SpaceError> {
        if state < self.states.len() {
            Ok(())
        } else {
            Err(SpaceError::StateOutOfRange { index: state, len: self.states.len() })
        }
    }

    /// Outgoing edges in canonical action order.
    pub fn neighbors(&self, state: usize) -> Result<&[Transition], SpaceError> {
        self.check_index(state)?;
        Ok(&self.edges[state])
    }

    /// Unchecked variant for hot loops over known-valid indices.
    pub fn out_edges(&self, state: usize) -> &[Transition] {
        &self.edges[state]
    }

    pub fn is_dead_end(&self, state: usize) -> bool {
        self.edges[state].is_empty()
    }

    pub fn find_edge(&self, state: usize, action: &EditAction) -> Result<&Transition, SpaceError> {
        self.neighbors(state)?
            .iter()
            .find(|t| &t.action == action)
            .ok_or_else(|| SpaceError::Inapplicable(format!("{action} is not an edge of state {state}")))
    }

    pub fn apply(&self, state: usize, action: &EditAction) -> Result<usize, SpaceError> {
        self.find_edge(state, action).map(|t| t.target)
    }

    /// Parameter-erased action kinds present on any edge.
    pub fn action_kinds(&self) -> BTreeSet<String> {
        self.edges.iter().flatten().map(|t| t.action.kind_key()).collect()
    }

    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("graph serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
