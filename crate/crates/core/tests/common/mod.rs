#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use chartseq_core::demonstrations::Task;
use chartseq_core::design_space::{
    ActionFeatures, Channel, EditAction, FeatureGraph, FieldKind, FieldRef, StateFeatures, Transition, FEATURE_DIM,
};
use chartseq_core::reward::{CostTable, RewardModel};
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Distinct edge labels for hand-built graphs: `add-field(x, e<i>)`.
pub fn label(i: usize) -> EditAction {
    EditAction::AddField { channel: Channel::X, field: FieldRef::new(format!("e{i}"), FieldKind::Nominal) }
}

pub fn state(bits: &[usize]) -> StateFeatures {
    let mut v = [0u8; FEATURE_DIM];
    for &b in bits {
        v[b] = 1;
    }
    StateFeatures(v)
}

pub fn act(entries: &[(usize, i8)]) -> ActionFeatures {
    let mut v = [0i8; FEATURE_DIM];
    for &(i, x) in entries {
        v[i] = x;
    }
    ActionFeatures(v)
}

/// Graph from `(source, target, action features)` triples; labels are
/// assigned per source in listing order.
pub fn graph(states: Vec<StateFeatures>, edges: &[(usize, usize, ActionFeatures)]) -> FeatureGraph {
    let mut adj: Vec<Vec<Transition>> = vec![Vec::new(); states.len()];
    for (i, &(s, t, f)) in edges.iter().enumerate() {
        adj[s].push(Transition { action: label(i), target: t, features: f });
    }
    for out in &mut adj {
        out.sort_by(|a, b| a.action.cmp(&b.action));
    }
    FeatureGraph::new(states, adj).unwrap()
}

/// Action features as `target − source` over a graph's state features.
pub fn diff_graph(states: Vec<StateFeatures>, edges: &[(usize, usize)]) -> FeatureGraph {
    let triples: Vec<_> = edges
        .iter()
        .map(|&(s, t)| (s, t, ActionFeatures::difference(&states[s], &states[t])))
        .collect();
    graph(states, &triples)
}

/// Random graph with random binary state features and random ±1 action
/// features; every state has between `min_out` and `max_out` edges.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, min_out: usize, max_out: usize) -> FeatureGraph {
    let states: Vec<StateFeatures> = (0..n)
        .map(|_| StateFeatures(std::array::from_fn(|_| rng.gen_range(0..2u8))))
        .collect();
    let mut edges = Vec::new();
    for s in 0..n {
        let k = rng.gen_range(min_out..=max_out);
        for _ in 0..k {
            let t = rng.gen_range(0..n);
            let f = ActionFeatures(std::array::from_fn(|_| rng.gen_range(-1..=1i8)));
            edges.push((s, t, f));
        }
    }
    graph(states, &edges)
}

pub fn random_theta<R: Rng>(rng: &mut R, scale: f64) -> [f64; FEATURE_DIM] {
    std::array::from_fn(|_| rng.gen_range(-scale..scale))
}

pub fn model(graph: &FeatureGraph, theta: [f64; FEATURE_DIM], cost: f64, lambda: f64) -> RewardModel {
    RewardModel::new(Task::new("cluster"), theta, CostTable::uniform(graph, cost), lambda, 0.99).unwrap()
}

pub fn costs(entries: &[(&str, f64)]) -> CostTable {
    CostTable::new(entries.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>()).unwrap()
}

pub fn reference_space() -> chartseq_core::design_space::DesignSpace {
    let dir = data_dir();
    let schema: Vec<FieldRef> = serde_json::from_slice(&std::fs::read(dir.join("schema.cars.json")).unwrap()).unwrap();
    let config = serde_json::from_slice(&std::fs::read(dir.join("reference_space.config.json")).unwrap()).unwrap();
    chartseq_core::design_space::enumerate_space(&schema, &config).unwrap()
}

pub fn default_costs() -> CostTable {
    CostTable::from_json(&std::fs::read(data_dir().join("costs.default.json")).unwrap()).unwrap()
}
