//! Expert demonstration trajectories: parsing, validation, persistence and
//! empirical feature statistics.
//!
//! Demo files are JSON lines. Each line is one trajectory:
//!
//! ```json
//! {"task":"cluster","steps":[{"state":{..}},{"action":{..}},{"state":{..}}],"source":"..."}
//! ```
//!
//! Steps strictly alternate and start and end with a state. States are
//! written as chart specs and resolved to indices on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design_space::{
    add_assign, ChartSpec, DesignSpace, EditAction, FeatureGraph, FeatureVector, SpaceError, FEATURE_DIM,
};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Task(String);

impl Task {
    pub fn new(name: impl Into<String>) -> Self {
        Task(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The set of analysis tasks demos may be tagged with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskRegistry(BTreeSet<Task>);

impl Default for TaskRegistry {
    fn default() -> Self {
        Self::from_names(["correlation", "anomaly", "cluster"])
    }
}

impl TaskRegistry {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TaskRegistry(names.into_iter().map(|n| Task::new(n)).collect())
    }

    pub fn register(&mut self, name: impl Into<String>) {
        self.0.insert(Task::new(name));
    }

    pub fn contains(&self, task: &Task) -> bool {
        self.0.contains(task)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Task> {
        self.0.iter()
    }
}

/// An alternating path `s0, a1, s1, ..., an, sn` through a graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<EditAction>,
}

impl Trajectory {
    pub fn start(state: usize) -> Self {
        Trajectory { states: vec![state], actions: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn first_state(&self) -> usize {
        self.states[0]
    }

    pub fn last_state(&self) -> usize {
        *self.states.last().expect("trajectory has a start state")
    }

    pub fn push(&mut self, action: EditAction, state: usize) {
        self.actions.push(action);
        self.states.push(state);
    }

    /// Checks that every `(s_{k-1}, a_k, s_k)` is an edge. Errors carry the
    /// 1-based step `k`.
    pub fn validate(&self, graph: &FeatureGraph) -> Result<(), StepError> {
        if self.states.len() != self.actions.len() + 1 {
            return Err(StepError { step: 0, reason: "states and actions do not alternate".into() });
        }
        if let Some(&bad) = self.states.iter().find(|&&s| s >= graph.num_states()) {
            return Err(StepError { step: 0, reason: format!("state index {bad} out of range") });
        }
        for (k, action) in self.actions.iter().enumerate() {
            let from = self.states[k];
            match graph.apply(from, action) {
                Ok(to) if to == self.states[k + 1] => {}
                Ok(_) => {
                    return Err(StepError {
                        step: k + 1,
                        reason: format!("{action} does not lead to the recorded state"),
                    })
                }
                Err(_) => {
                    return Err(StepError { step: k + 1, reason: format!("{action} is not an edge of its source state") })
                }
            }
        }
        Ok(())
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn concat(&self, other: &Trajectory) -> Option<Trajectory> {
        if self.last_state() != other.first_state() {
            return None;
        }
        let mut out = self.clone();
        out.states.extend_from_slice(&other.states[1..]);
        out.actions.extend_from_slice(&other.actions);
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {step}: {reason}")]
pub struct StepError {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    pub task: Task,
    pub trajectory: Trajectory,
    pub source: String,
}

impl Demonstration {
    pub fn new(task: Task, trajectory: Trajectory, source: impl Into<String>, graph: &FeatureGraph) -> Result<Self, DemoError> {
        if trajectory.is_empty() {
            return Err(DemoError::TooShort { line: 0 });
        }
        trajectory.validate(graph).map_err(|e| DemoError::Invalid { line: 0, step: e.step, reason: e.reason })?;
        Ok(Demonstration { task, trajectory, source: source.into() })
    }
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unknown task {task:?}")]
    UnknownTask { line: usize, task: String },
    #[error("line {line}: a demonstration needs at least one action")]
    TooShort { line: usize },
    #[error("line {line}: state {state} is not in the design space")]
    UnknownState { line: usize, state: usize },
    #[error("line {line}: step {step}: {reason}")]
    Invalid { line: usize, step: usize, reason: String },
    #[error("no demonstrations for task {0}")]
    NoDemos(Task),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// One entry of a serialized trajectory: `{"state": ..}` or `{"action": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    State(ChartSpec),
    Action(EditAction),
}

/// Alternating state/action steps with states written as chart specs.
pub fn trajectory_steps(trajectory: &Trajectory, space: &DesignSpace) -> Result<Vec<Step>, SpaceError> {
    let mut steps = Vec::with_capacity(2 * trajectory.len() + 1);
    steps.push(Step::State(space.spec(trajectory.states[0])?.clone()));
    for (a, &s) in trajectory.actions.iter().zip(&trajectory.states[1..]) {
        steps.push(Step::Action(a.clone()));
        steps.push(Step::State(space.spec(s)?.clone()));
    }
    Ok(steps)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoRecord {
    task: Task,
    steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    source: String,
}

/// Demonstrations validated against one design space, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoCorpus {
    fingerprint: String,
    demos: Vec<Demonstration>,
}

impl DemoCorpus {
    pub fn new(fingerprint: impl Into<String>, demos: Vec<Demonstration>) -> Self {
        DemoCorpus { fingerprint: fingerprint.into(), demos }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    pub fn for_task<'a>(&'a self, task: &'a Task) -> impl Iterator<Item = &'a Demonstration> + 'a {
        self.demos.iter().filter(move |d| &d.task == task)
    }

    pub fn counts(&self) -> BTreeMap<Task, usize> {
        let mut out = BTreeMap::new();
        for d in &self.demos {
            *out.entry(d.task.clone()).or_default() += 1;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    /// JSON-lines serialization; states are written as chart specs.
    pub fn to_jsonl(&self, space: &DesignSpace) -> Result<String, DemoError> {
        let mut out = String::new();
        for d in &self.demos {
            let steps = trajectory_steps(&d.trajectory, space)?;
            let rec = DemoRecord { task: d.task.clone(), steps, source: d.source.clone() };
            out.push_str(&serde_json::to_string(&rec).expect("demo serializes"));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Parses and validates a JSON-lines demo file. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn parse_demos(bytes: &[u8], space: &DesignSpace, tasks: &TaskRegistry) -> Result<DemoCorpus, DemoError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DemoError::Malformed { line: 0, reason: e.to_string() })?;
    let mut demos = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: DemoRecord =
            serde_json::from_str(raw).map_err(|e| DemoError::Malformed { line, reason: e.to_string() })?;
        if !tasks.contains(&rec.task) {
            return Err(DemoError::UnknownTask { line, task: rec.task.0 });
        }
        let mut trajectory = Trajectory { states: Vec::new(), actions: Vec::new() };
        for (k, step) in rec.steps.into_iter().enumerate() {
            match (k % 2, step) {
                (0, Step::State(spec)) => {
                    let state_no = trajectory.states.len();
                    let idx = space
                        .state_index(&spec)
                        .map_err(|_| DemoError::UnknownState { line, state: state_no })?;
                    trajectory.states.push(idx);
                }
                (1, Step::Action(a)) => trajectory.actions.push(a),
                (_, _) => {
                    return Err(DemoError::Malformed {
                        line,
                        reason: format!("step entry {k} breaks the state/action alternation"),
                    })
                }
            }
        }
        if trajectory.states.len() != trajectory.actions.len() + 1 {
            return Err(DemoError::Malformed { line, reason: "steps must start and end with a state".into() });
        }
        if trajectory.is_empty() {
            return Err(DemoError::TooShort { line });
        }
        trajectory
            .validate(space.graph())
            .map_err(|e| DemoError::Invalid { line, step: e.step, reason: e.reason })?;
        demos.push(Demonstration { task: rec.task, trajectory, source: rec.source });
    }
    Ok(DemoCorpus { fingerprint: space.fingerprint().to_string(), demos })
}

/// `f_ζ`: features of every state `s0..sn` once plus every action
/// `a1..an` once.
pub fn trajectory_features(trajectory: &Trajectory, graph: &FeatureGraph) -> FeatureVector {
    let mut acc = [0.0; FEATURE_DIM];
    for &s in &trajectory.states {
        add_assign(&mut acc, &graph.state_features(s).to_real());
    }
    for (k, a) in trajectory.actions.iter().enumerate() {
        let edge = graph
            .find_edge(trajectory.states[k], a)
            .expect("trajectory validated against this graph");
        add_assign(&mut acc, &edge.features.to_real());
    }
    acc
}

/// Mean trajectory features over the task's demonstrations.
pub fn empirical_expectation(corpus: &DemoCorpus, task: &Task, graph: &FeatureGraph) -> Result<FeatureVector, DemoError> {
    let mut acc = [0.0; FEATURE_DIM];
    let mut n = 0usize;
    for d in corpus.for_task(task) {
        add_assign(&mut acc, &trajectory_features(&d.trajectory, graph));
        n += 1;
    }
    if n == 0 {
        return Err(DemoError::NoDemos(task.clone()));
    }
    Ok(acc.map(|v| v / n as f64))
}
