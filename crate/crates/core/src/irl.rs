//! Maximum-entropy inverse reinforcement learning on a deterministic
//! feature graph.
//!
//! A trajectory `ζ` of `n` actions starting at `s0` has probability
//!
//! ```text
//! P(ζ | θ) = p0(s0) · exp(θ·f_ζ) / Z_n(s0)
//! ```
//!
//! where `f_ζ` counts every state and every action once and `Z_n(s0)` sums
//! `exp(θ·f_ζ')` over all trajectories of `n` actions leaving `s0`.
//! Trajectories that reach a dead end stop there. `log Z_n(s0)` is the soft
//! value with `n` steps remaining, computed by a log-sum-exp recursion.
//!
//! Values and local policies are indexed by *steps remaining*. With a
//! horizon `N`, time step `t` (1-based) has `N − t + 1` steps remaining, so
//! a demo of length `n` occupies the last `n` steps of the horizon.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demonstrations::{empirical_expectation, trajectory_features, DemoCorpus, DemoError, Demonstration, Task, Trajectory};
use crate::design_space::{add_assign, dot, norm, scaled_add_assign, FeatureGraph, FeatureVector, FEATURE_DIM};

#[derive(Debug, Error)]
pub enum IrlError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("horizon {horizon} is shorter than a demonstration of length {length}")]
    HorizonTooShort { horizon: usize, length: usize },
    #[error("invalid hyperparameter {name}: {reason}")]
    InvalidHyperparams { name: &'static str, reason: String },
    #[error("training diverged at iteration {iteration}: theta has non-finite components")]
    Diverged { iteration: usize },
    #[error("start state {0} has zero probability under the initial-state distribution")]
    ImpossibleStart(usize),
    #[error(transparent)]
    Demo(#[from] DemoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialDistribution {
    /// Uniform over the distinct start states of the task's demos.
    #[default]
    UniformOverDemoStarts,
    UniformOverAllStates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// `None` means the longest demonstration length.
    pub horizon: Option<usize>,
    pub initial_distribution: InitialDistribution,
    /// Halve the step (up to 30 times) when it would lower the likelihood.
    pub line_search: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.05,
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            horizon: None,
            initial_distribution: InitialDistribution::UniformOverDemoStarts,
            line_search: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), IrlError> {
        let bad = |name, reason: &str| Err(IrlError::InvalidHyperparams { name, reason: reason.to_string() });
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be positive");
        }
        if !(self.gradient_tolerance.is_finite() && self.gradient_tolerance > 0.0) {
            return bad("gradient_tolerance", "must be positive");
        }
        if self.horizon == Some(0) {
            return Err(IrlError::ZeroHorizon);
        }
        Ok(())
    }
}

/// `log Σ exp(x)` with max shift; `-inf` for an empty input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Soft values and local action probabilities for every number of steps
/// remaining up to the horizon.
#[derive(Debug, Clone)]
pub struct SoftPolicy {
    horizon: usize,
    /// `values[k][s]`: log of the summed exp-reward of all `k`-step
    /// trajectories from `s` (state terms included).
    values: Vec<Vec<f64>>,
    /// `log_probs[k - 1][s][e]`: log P(edge e | s) with `k` steps remaining.
    log_probs: Vec<Vec<Vec<f64>>>,
}

impl SoftPolicy {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Soft value `V(s)` with `steps` remaining; `V` with zero steps is the
    /// terminal state reward `θ·f_s`.
    pub fn value(&self, steps: usize, state: usize) -> f64 {
        self.values[steps][state]
    }

    /// Local policy with `steps ≥ 1` remaining, in edge order. Empty at
    /// dead ends.
    pub fn action_probs(&self, steps: usize, state: usize) -> Vec<f64> {
        self.log_probs[steps - 1][state].iter().map(|lp| lp.exp()).collect()
    }

    pub fn log_action_probs(&self, steps: usize, state: usize) -> &[f64] {
        &self.log_probs[steps - 1][state]
    }
}

/// Backward log-sum-exp recursion:
/// `V_k(s) = log Σ_a exp(θ·(f_s + f_a) + V_{k−1}(s'))`, `V_0(s) = θ·f_s`.
/// Dead ends keep `V_k(s) = θ·f_s` (the trajectory stops there).
pub fn soft_backward(theta: &FeatureVector, graph: &FeatureGraph, horizon: usize) -> Result<SoftPolicy, IrlError> {
    if horizon == 0 {
        return Err(IrlError::ZeroHorizon);
    }
    let n = graph.num_states();
    let state_r: Vec<f64> = graph.all_state_features().iter().map(|f| dot(theta, &f.to_real())).collect();
    let action_r: Vec<Vec<f64>> = (0..n)
        .map(|s| graph.out_edges(s).iter().map(|e| dot(theta, &e.features.to_real())).collect())
        .collect();

    let mut values = Vec::with_capacity(horizon + 1);
    values.push(state_r.clone());
    let mut log_probs = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let next = &values[k - 1];
        let mut v = vec![0.0; n];
        let mut lp = vec![Vec::new(); n];
        for s in 0..n {
            let edges = graph.out_edges(s);
            if edges.is_empty() {
                v[s] = state_r[s];
                continue;
            }
            let q: Vec<f64> = edges
                .iter()
                .zip(&action_r[s])
                .map(|(e, ar)| state_r[s] + ar + next[e.target])
                .collect();
            let vs = log_sum_exp(q.iter().copied());
            lp[s] = q.iter().map(|x| x - vs).collect();
            v[s] = vs;
        }
        values.push(v);
        log_probs.push(lp);
    }
    Ok(SoftPolicy { horizon, values, log_probs })
}

/// Forward propagation of state-visitation mass over `steps` actions.
/// `visits[0]` is `init`; `visits[t + 1](s') = Σ D_t(s)·P(a|s)` over edges
/// into `s'`, plus the mass already sitting on `s'` if it is a dead end.
pub fn expected_visitation(
    policy: &SoftPolicy,
    graph: &FeatureGraph,
    steps: usize,
    init: &[f64],
) -> Result<Vec<Vec<f64>>, IrlError> {
    if steps > policy.horizon {
        return Err(IrlError::HorizonTooShort { horizon: policy.horizon, length: steps });
    }
    let n = graph.num_states();
    let mut visits = Vec::with_capacity(steps + 1);
    visits.push(init.to_vec());
    for t in 0..steps {
        let remaining = steps - t;
        let cur = &visits[t];
        let mut next = vec![0.0; n];
        for s in 0..n {
            let mass = cur[s];
            if mass == 0.0 {
                continue;
            }
            if graph.is_dead_end(s) {
                next[s] += mass;
                continue;
            }
            for (e, lp) in graph.out_edges(s).iter().zip(policy.log_action_probs(remaining, s)) {
                next[e.target] += mass * lp.exp();
            }
        }
        visits.push(next);
    }
    Ok(visits)
}

/// Expected `f_ζ` of `steps`-action trajectories started from `init`
/// (weights need not be normalized; the result scales with them).
pub fn expected_features(
    policy: &SoftPolicy,
    graph: &FeatureGraph,
    steps: usize,
    init: &[f64],
) -> Result<FeatureVector, IrlError> {
    let visits = expected_visitation(policy, graph, steps, init)?;
    let mut acc = [0.0; FEATURE_DIM];
    for (t, d) in visits.iter().enumerate().take(steps) {
        let remaining = steps - t;
        for (s, &mass) in d.iter().enumerate() {
            if mass == 0.0 || graph.is_dead_end(s) {
                continue;
            }
            scaled_add_assign(&mut acc, mass, &graph.state_features(s).to_real());
            for (e, lp) in graph.out_edges(s).iter().zip(policy.log_action_probs(remaining, s)) {
                scaled_add_assign(&mut acc, mass * lp.exp(), &e.features.to_real());
            }
        }
    }
    for (s, &mass) in visits[steps].iter().enumerate() {
        if mass != 0.0 {
            scaled_add_assign(&mut acc, mass, &graph.state_features(s).to_real());
        }
    }
    Ok(acc)
}

/// Start-state distribution as log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct StartDistribution {
    log_probs: Vec<f64>,
}

impl StartDistribution {
    pub fn uniform_over(num_states: usize, support: &BTreeSet<usize>) -> Self {
        let lp = -(support.len() as f64).ln();
        let log_probs = (0..num_states)
            .map(|s| if support.contains(&s) { lp } else { f64::NEG_INFINITY })
            .collect();
        StartDistribution { log_probs }
    }

    pub fn resolve<'a>(
        kind: InitialDistribution,
        graph: &FeatureGraph,
        demos: impl IntoIterator<Item = &'a Demonstration>,
    ) -> Self {
        let support: BTreeSet<usize> = match kind {
            InitialDistribution::UniformOverDemoStarts => demos.into_iter().map(|d| d.trajectory.first_state()).collect(),
            InitialDistribution::UniformOverAllStates => (0..graph.num_states()).collect(),
        };
        Self::uniform_over(graph.num_states(), &support)
    }

    pub fn log_prob(&self, state: usize) -> f64 {
        self.log_probs[state]
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }
}

/// `log P(ζ | θ) = log p0(s0) + θ·f_ζ − log Z_n(s0)`.
pub fn trajectory_loglik(
    trajectory: &Trajectory,
    theta: &FeatureVector,
    graph: &FeatureGraph,
    policy: &SoftPolicy,
    start: &StartDistribution,
) -> Result<f64, IrlError> {
    let n = trajectory.len();
    if n > policy.horizon {
        return Err(IrlError::HorizonTooShort { horizon: policy.horizon, length: n });
    }
    let s0 = trajectory.first_state();
    let lp0 = start.log_prob(s0);
    if lp0 == f64::NEG_INFINITY {
        return Err(IrlError::ImpossibleStart(s0));
    }
    Ok(lp0 + dot(theta, &trajectory_features(trajectory, graph)) - policy.value(n, s0))
}

fn task_demos<'a>(corpus: &'a DemoCorpus, task: &'a Task) -> Result<Vec<&'a Demonstration>, IrlError> {
    let demos: Vec<&Demonstration> = corpus.for_task(task).collect();
    if demos.is_empty() {
        return Err(DemoError::NoDemos(task.clone()).into());
    }
    Ok(demos)
}

fn resolve_horizon(demos: &[&Demonstration], hyper: &Hyperparams) -> Result<usize, IrlError> {
    let longest = demos.iter().map(|d| d.trajectory.len()).max().unwrap_or(1);
    match hyper.horizon {
        Some(0) => Err(IrlError::ZeroHorizon),
        Some(h) if h < longest => Err(IrlError::HorizonTooShort { horizon: h, length: longest }),
        Some(h) => Ok(h),
        None => Ok(longest),
    }
}

/// Sum of model-expected trajectory features, each demo conditioned on
/// its own start state and length.
fn model_expectation_sum(
    policy: &SoftPolicy,
    graph: &FeatureGraph,
    demos: &[&Demonstration],
) -> Result<FeatureVector, IrlError> {
    let mut by_length: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for d in demos {
        let w = by_length.entry(d.trajectory.len()).or_insert_with(|| vec![0.0; graph.num_states()]);
        w[d.trajectory.first_state()] += 1.0;
    }
    let mut acc = [0.0; FEATURE_DIM];
    for (len, weights) in by_length {
        add_assign(&mut acc, &expected_features(policy, graph, len, &weights)?);
    }
    Ok(acc)
}

/// Total log-likelihood of the task's demos.
pub fn total_loglik(
    theta: &FeatureVector,
    corpus: &DemoCorpus,
    task: &Task,
    graph: &FeatureGraph,
    hyper: &Hyperparams,
) -> Result<f64, IrlError> {
    let demos = task_demos(corpus, task)?;
    let horizon = resolve_horizon(&demos, hyper)?;
    let policy = soft_backward(theta, graph, horizon)?;
    let start = StartDistribution::resolve(hyper.initial_distribution, graph, demos.iter().copied());
    demos
        .iter()
        .map(|d| trajectory_loglik(&d.trajectory, theta, graph, &policy, &start))
        .sum()
}

/// Gradient of [`total_loglik`]: `Σ_i f_ζi − Σ_i E[f_ζ | s0_i, n_i]`,
/// i.e. `m · (empirical expectation − model expectation)` for `m` demos.
pub fn loglik_gradient(
    theta: &FeatureVector,
    corpus: &DemoCorpus,
    task: &Task,
    graph: &FeatureGraph,
    hyper: &Hyperparams,
) -> Result<FeatureVector, IrlError> {
    let demos = task_demos(corpus, task)?;
    let horizon = resolve_horizon(&demos, hyper)?;
    let policy = soft_backward(theta, graph, horizon)?;
    let (_, grad) = objective(theta, graph, &demos, &policy, corpus, task, hyper)?;
    Ok(grad)
}

/// Total log-likelihood and its gradient.
fn objective(
    theta: &FeatureVector,
    graph: &FeatureGraph,
    demos: &[&Demonstration],
    policy: &SoftPolicy,
    corpus: &DemoCorpus,
    task: &Task,
    hyper: &Hyperparams,
) -> Result<(f64, FeatureVector), IrlError> {
    let m = demos.len() as f64;
    let start = StartDistribution::resolve(hyper.initial_distribution, graph, demos.iter().copied());
    let mut ll = 0.0;
    for d in demos {
        ll += trajectory_loglik(&d.trajectory, theta, graph, policy, &start)?;
    }
    let empirical = empirical_expectation(corpus, task, graph)?;
    let model = model_expectation_sum(policy, graph, demos)?;
    let mut grad = [0.0; FEATURE_DIM];
    for i in 0..FEATURE_DIM {
        grad[i] = m * empirical[i] - model[i];
    }
    Ok((ll, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the total-log-likelihood gradient at the returned θ.
    pub final_gradient_norm: f64,
    /// Total log-likelihood per iteration, starting at θ = 0.
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedTheta {
    pub task: Task,
    pub theta: FeatureVector,
    pub horizon: usize,
    pub diagnostics: TrainingDiagnostics,
}

/// Gradient ascent on the total demo log-likelihood from θ = 0.
pub fn train(corpus: &DemoCorpus, task: &Task, graph: &FeatureGraph, hyper: &Hyperparams) -> Result<TrainedTheta, IrlError> {
    hyper.validate()?;
    let demos = task_demos(corpus, task)?;
    let horizon = resolve_horizon(&demos, hyper)?;
    let eval = |theta: &FeatureVector| -> Result<(f64, FeatureVector), IrlError> {
        let policy = soft_backward(theta, graph, horizon)?;
        objective(theta, graph, &demos, &policy, corpus, task, hyper)
    };

    let mut theta = [0.0; FEATURE_DIM];
    let (mut ll, mut grad) = eval(&theta)?;
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = norm(&grad) < hyper.gradient_tolerance;
    while !converged && iterations < hyper.max_iterations {
        iterations += 1;
        let mut step = hyper.learning_rate;
        let mut halvings = 0;
        let (cand, cand_ll, cand_grad) = loop {
            let mut cand = theta;
            scaled_add_assign(&mut cand, step, &grad);
            if cand.iter().any(|v| !v.is_finite()) {
                return Err(IrlError::Diverged { iteration: iterations });
            }
            let (cll, cg) = eval(&cand)?;
            if !cll.is_finite() {
                return Err(IrlError::Diverged { iteration: iterations });
            }
            if !hyper.line_search || cll >= ll || halvings >= 30 {
                break (cand, cll, cg);
            }
            step *= 0.5;
            halvings += 1;
        };
        theta = cand;
        ll = cand_ll;
        grad = cand_grad;
        trace.push(ll);
        converged = norm(&grad) < hyper.gradient_tolerance;
    }
    Ok(TrainedTheta {
        task: task.clone(),
        theta,
        horizon,
        diagnostics: TrainingDiagnostics {
            iterations,
            converged,
            final_gradient_norm: norm(&grad),
            loglik_trace: trace,
        },
    })
}

/// Samples a trajectory of up to `steps` actions from the soft policy.
pub fn sample_trajectory<R: Rng + ?Sized>(
    policy: &SoftPolicy,
    graph: &FeatureGraph,
    start: usize,
    steps: usize,
    rng: &mut R,
) -> Trajectory {
    let mut traj = Trajectory::start(start);
    let mut s = start;
    for t in 0..steps.min(policy.horizon) {
        let remaining = steps - t;
        let edges = graph.out_edges(s);
        if edges.is_empty() {
            break;
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let lps = policy.log_action_probs(remaining, s);
        let mut pick = edges.len() - 1;
        for (i, lp) in lps.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                pick = i;
                break;
            }
        }
        let e = &edges[pick];
        traj.push(e.action.clone(), e.target);
        s = e.target;
    }
    traj
}

/// Synthetic demonstrations from a planted θ, start states drawn uniformly
/// over all states. Dead-end starts are redrawn.
pub fn generate_demos<R: Rng + ?Sized>(
    theta: &FeatureVector,
    graph: &FeatureGraph,
    task: &Task,
    count: usize,
    length: usize,
    source: &str,
    rng: &mut R,
) -> Result<Vec<Demonstration>, IrlError> {
    let policy = soft_backward(theta, graph, length)?;
    let live: Vec<usize> = (0..graph.num_states()).filter(|&s| !graph.is_dead_end(s)).collect();
    if live.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let start = live[rng.gen_range(0..live.len())];
        let traj = sample_trajectory(&policy, graph, start, length, rng);
        out.push(Demonstration { task: task.clone(), trajectory: traj, source: source.to_string() });
    }
    Ok(out)
}
