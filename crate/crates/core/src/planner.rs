//! Value iteration over the design space and the three consumers built on
//! it: next-action recommendation, permutation ranking and greedy sequence
//! generation.

use std::collections::HashSet;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demonstrations::{trajectory_steps, Step, Trajectory};
use crate::design_space::{DesignSpace, EditAction, FeatureGraph, SpaceError};
use crate::reward::{RewardError, RewardModel};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 100_000;
/// Largest action set accepted by [`rank_permutations`] (8! orderings).
pub const MAX_PERMUTATION_ACTIONS: usize = 8;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("value iteration did not converge in {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{0} actions exceed the permutation limit of {MAX_PERMUTATION_ACTIONS}")]
    TooManyActions(usize),
    #[error("duplicate action in set: {0}")]
    DuplicateAction(EditAction),
    #[error("no ordering of the action set is applicable from the source state")]
    NoApplicableOrdering,
    #[error("start state {0} has no outgoing edges")]
    DeadEndStart(usize),
    #[error("step {step}: {source}")]
    InvalidStep { step: usize, source: SpaceError },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Converged state values with the greedy policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    /// Index into the state's edge list; `None` at dead ends.
    pub policy: Vec<Option<usize>>,
    pub residual: f64,
    pub iterations: usize,
}

impl ValueTable {
    pub fn policy_action<'g>(&self, graph: &'g FeatureGraph, state: usize) -> Option<&'g EditAction> {
        self.policy[state].map(|e| &graph.out_edges(state)[e].action)
    }
}

fn greedy(rewards: &[f64], graph: &FeatureGraph, state: usize, values: &[f64], gamma: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (e, r)) in graph.out_edges(state).iter().zip(rewards).enumerate() {
        let q = r + gamma * values[e.target];
        // strict comparison keeps the canonically first maximizer
        if best.is_none_or(|(_, b)| q > b) {
            best = Some((i, q));
        }
    }
    best
}

/// Synchronous value iteration from `V = 0`. Stops once the largest
/// update falls below `tolerance`; dead ends keep `V = 0`.
pub fn value_iteration(
    graph: &FeatureGraph,
    model: &RewardModel,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ValueTable, PlanError> {
    let rewards = model.edge_rewards(graph)?;
    let n = graph.num_states();
    let gamma = model.gamma;
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        residual = 0.0;
        for s in 0..n {
            let v = greedy(&rewards[s], graph, s, &values, gamma).map_or(0.0, |(_, q)| q);
            residual = f64::max(residual, (v - values[s]).abs());
            next[s] = v;
        }
        std::mem::swap(&mut values, &mut next);
        if residual < tolerance {
            break;
        }
    }
    if residual >= tolerance {
        return Err(PlanError::NotConverged { iterations, residual });
    }
    let policy = (0..n)
        .map(|s| greedy(&rewards[s], graph, s, &values, gamma).map(|(i, _)| i))
        .collect();
    Ok(ValueTable { values, policy, residual, iterations })
}

/// `max_s |V(s) − max_a [R + γV(s')]|`.
pub fn bellman_residual(graph: &FeatureGraph, model: &RewardModel, values: &[f64]) -> Result<f64, PlanError> {
    let rewards = model.edge_rewards(graph)?;
    Ok((0..graph.num_states())
        .map(|s| {
            let backup = greedy(&rewards[s], graph, s, values, model.gamma).map_or(0.0, |(_, q)| q);
            (values[s] - backup).abs()
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub action: EditAction,
    pub target: usize,
    /// `R(s, a, s') + γ·V(s')`.
    pub score: f64,
}

/// Outgoing actions scored by their one-step backup, best first, ties in
/// canonical action order. Dead ends yield an empty list.
pub fn recommend_next(
    graph: &FeatureGraph,
    model: &RewardModel,
    values: &ValueTable,
    state: usize,
    k: usize,
) -> Result<Vec<Recommendation>, PlanError> {
    if k == 0 {
        return Err(PlanError::ZeroK);
    }
    let edges = graph.neighbors(state)?;
    let f = graph.state_features(state);
    let mut scored = edges
        .iter()
        .map(|e| {
            Ok(Recommendation {
                action: e.action.clone(),
                target: e.target,
                score: model.transition_reward(f, e)? + model.gamma * values.values[e.target],
            })
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    // stable: equal scores stay in canonical edge order
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    scored.truncate(k);
    Ok(scored)
}

/// `Σ_k γ^k · R(s_k, a_{k+1}, s_{k+1})` along `actions` from `start`.
pub fn sequence_score(graph: &FeatureGraph, model: &RewardModel, start: usize, actions: &[EditAction]) -> Result<f64, PlanError> {
    Ok(walk(graph, model, start, actions)?.1)
}

fn walk(graph: &FeatureGraph, model: &RewardModel, start: usize, actions: &[EditAction]) -> Result<(Trajectory, f64), PlanError> {
    graph.neighbors(start)?;
    let mut traj = Trajectory::start(start);
    let mut score = 0.0;
    let mut discount = 1.0;
    for (k, a) in actions.iter().enumerate() {
        let s = traj.last_state();
        let e = graph
            .find_edge(s, a)
            .map_err(|source| PlanError::InvalidStep { step: k + 1, source })?;
        score += discount * model.transition_reward(graph.state_features(s), e)?;
        discount *= model.gamma;
        traj.push(a.clone(), e.target);
    }
    Ok((traj, score))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSequence {
    pub rank: usize,
    pub score: f64,
    pub trajectory: Trajectory,
}

/// Output form of a ranked sequence: `{rank, score, steps}` with states
/// written as chart specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub rank: usize,
    pub score: f64,
    pub steps: Vec<Step>,
}

impl SequenceReport {
    pub fn new(seq: &RankedSequence, space: &DesignSpace) -> Result<Self, SpaceError> {
        Ok(SequenceReport { rank: seq.rank, score: seq.score, steps: trajectory_steps(&seq.trajectory, space)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationRanking {
    pub ranked: Vec<RankedSequence>,
    /// Orderings with an inapplicable step.
    pub excluded: Vec<Vec<EditAction>>,
}

/// Scores every ordering of `actions` applied from `source`, best first.
/// Equal scores are ordered lexicographically by action sequence.
pub fn rank_permutations(
    graph: &FeatureGraph,
    model: &RewardModel,
    source: usize,
    actions: &[EditAction],
) -> Result<PermutationRanking, PlanError> {
    if actions.len() > MAX_PERMUTATION_ACTIONS {
        return Err(PlanError::TooManyActions(actions.len()));
    }
    let mut seen = HashSet::new();
    for a in actions {
        if !seen.insert(a) {
            return Err(PlanError::DuplicateAction(a.clone()));
        }
    }
    graph.neighbors(source)?;
    let mut sorted = actions.to_vec();
    sorted.sort();

    let mut scored = Vec::new();
    let mut excluded = Vec::new();
    for order in sorted.iter().cloned().permutations(sorted.len()) {
        match walk(graph, model, source, &order) {
            Ok((traj, score)) => scored.push((score, traj)),
            Err(PlanError::InvalidStep { .. }) => excluded.push(order),
            Err(e) => return Err(e),
        }
    }
    if scored.is_empty() {
        return Err(PlanError::NoApplicableOrdering);
    }
    scored.sort_by(|(sa, ta), (sb, tb)| sb.total_cmp(sa).then_with(|| ta.actions.cmp(&tb.actions)));
    let ranked = scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, trajectory))| RankedSequence { rank: i + 1, score, trajectory })
        .collect();
    Ok(PermutationRanking { ranked, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_steps: usize,
    pub target: Option<usize>,
}

/// Follows the greedy policy from `start` until `max_steps`, the target,
/// a dead end, or a step that would revisit a state.
pub fn generate_sequence(
    graph: &FeatureGraph,
    model: &RewardModel,
    values: &ValueTable,
    start: usize,
    stop: StopRule,
) -> Result<RankedSequence, PlanError> {
    graph.neighbors(start)?;
    if stop.target == Some(start) {
        return Ok(RankedSequence { rank: 1, score: 0.0, trajectory: Trajectory::start(start) });
    }
    if graph.is_dead_end(start) {
        return Err(PlanError::DeadEndStart(start));
    }
    let mut visited = HashSet::from([start]);
    let mut actions = Vec::new();
    let mut s = start;
    while actions.len() < stop.max_steps {
        let Some(e) = values.policy[s] else { break };
        let edge = &graph.out_edges(s)[e];
        if visited.contains(&edge.target) {
            break;
        }
        visited.insert(edge.target);
        actions.push(edge.action.clone());
        s = edge.target;
        if stop.target == Some(s) {
            break;
        }
    }
    let (trajectory, score) = walk(graph, model, start, &actions)?;
    Ok(RankedSequence { rank: 1, score, trajectory })
}
