//! The `chartseq` command line: build a design space, train per-task
//! rewards, and recommend, rank, thread and evaluate chart edits.
//!
//! Machine-readable JSON goes to stdout (or `--out`); diagnostics go to
//! stderr.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chartseq_core::config::Defaults;
use chartseq_core::demonstrations::{parse_demos, DemoCorpus, Task};
use chartseq_core::design_space::{enumerate_space, ChartSpec, DesignSpace, EditAction, EnumerationConfig, FeatureVector, FieldRef};
use chartseq_core::evaluation::{compare_by_task, parse_ratings_csv, RankItem, RankerSet, ScoreMode};
use chartseq_core::irl::{generate_demos, train, InitialDistribution};
use chartseq_core::model::ModelFile;
use chartseq_core::planner::{generate_sequence, rank_permutations, recommend_next, value_iteration, SequenceReport, StopRule};
use chartseq_core::reward::{load_cost_table, CostTable, RewardModel};
use chartseq_server::ServiceConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

/// Bundled fallback when `--costs` is not given.
const DEFAULT_COSTS: &str = include_str!("../../../data/costs.default.json");

#[derive(Debug, Parser)]
#[command(name = "chartseq", version, about = "Task-oriented chart sequencing")]
pub struct Cli {
    /// Seed for every random choice (start states, synthetic demos).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate the design space for a schema.
    BuildSpace(BuildSpaceArgs),
    /// Fit one task's reward weights to demonstrations.
    Train(TrainArgs),
    /// Top-k next edits from a chart.
    Recommend(RecommendArgs),
    /// Rank every ordering of a set of edits.
    Rank(RankArgs),
    /// Follow the greedy policy from a chart.
    Sequence(SequenceArgs),
    /// Rank correlations of the three rankers against human ratings.
    Eval(EvalArgs),
    /// Sample synthetic demonstrations from planted weights.
    DemoGen(DemoGenArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct BuildSpaceArgs {
    /// Schema file: JSON list of {name, kind}.
    #[arg(long)]
    pub schema: PathBuf,
    /// Enumeration config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Where to write the space; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub demos: PathBuf,
    #[arg(long)]
    pub task: String,
    /// Defaults file overriding the bundled one (tasks, γ, λ, training).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub gradient_tolerance: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum)]
    pub initial_distribution: Option<InitialArg>,
    #[arg(long)]
    pub no_line_search: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitialArg {
    DemoStarts,
    AllStates,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Cost table; the bundled default table when omitted.
    #[arg(long)]
    pub costs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Chart spec as inline JSON or a file path; seeded-random when omitted.
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Source chart spec as inline JSON or a file path.
    #[arg(long)]
    pub source: String,
    /// JSON list of edit actions, inline or a file path.
    #[arg(long)]
    pub actions: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SequenceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub max_steps: usize,
    /// Stop on reaching this chart spec.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// One model file per task; repeat the flag.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub costs: Option<PathBuf>,
    /// JSON list of {id, task, source, actions}.
    #[arg(long)]
    pub items: PathBuf,
    /// CSV with header item_id,mean_rating.
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Sequence)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Sequence,
    NextAction,
}

#[derive(Debug, Args)]
pub struct DemoGenArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// JSON object mapping task name to a 14-element weight vector.
    #[arg(long)]
    pub planted: PathBuf,
    /// Only this task; every task in the planted file when omitted.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    #[arg(long, default_value_t = 4)]
    pub length: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config file and the environment.
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or unreadable input; exit status 2.
    #[error("{0}")]
    Input(String),
    /// Failure while computing; exit status 1.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &str) -> Result<T, CliError> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Input(format!("{what}: {e}")))
}

/// Inline JSON when the argument starts with `{` or `[`, else a file path.
fn inline_or_file<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> Result<T, CliError> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        parse_json(trimmed.as_bytes(), what)
    } else {
        parse_json(&read(Path::new(arg))?, what)
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

/// Writes `text` to `out`, or to stdout when no path is given.
fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| failed(format!("{}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(failed),
    }
}

fn load_space(path: &Path) -> Result<DesignSpace, CliError> {
    DesignSpace::from_json(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_costs(path: Option<&Path>, space: &DesignSpace) -> Result<CostTable, CliError> {
    let bytes = match path {
        Some(p) => read(p)?,
        None => DEFAULT_COSTS.as_bytes().to_vec(),
    };
    load_cost_table(&bytes, space.graph()).map_err(input)
}

fn load_model(path: &Path, space: &DesignSpace, costs: CostTable) -> Result<RewardModel, CliError> {
    let file = ModelFile::from_json(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?;
    file.check_space(space.fingerprint()).map_err(|e| input(format!("{}: {e}", path.display())))?;
    file.reward_model(costs).map_err(input)
}

struct Loaded {
    space: DesignSpace,
    model: RewardModel,
}

fn load_model_args(args: &ModelArgs) -> Result<Loaded, CliError> {
    let space = load_space(&args.space)?;
    let costs = load_costs(args.costs.as_deref(), &space)?;
    let model = load_model(&args.model, &space, costs)?;
    Ok(Loaded { space, model })
}

fn resolve_state(space: &DesignSpace, arg: Option<&str>, seed: u64) -> Result<usize, CliError> {
    match arg {
        Some(a) => {
            let spec: ChartSpec = inline_or_file(a, "state")?;
            spec.validate().map_err(input)?;
            space.state_index(&spec).map_err(|e| input(format!("state: {e}")))
        }
        None => {
            let live: Vec<usize> = (0..space.len()).filter(|&s| !space.graph().is_dead_end(s)).collect();
            if live.is_empty() {
                return Err(failed("design space has no state with outgoing edges"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(live[rng.gen_range(0..live.len())])
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::BuildSpace(a) => build_space(a, stdout, stderr),
        Command::Train(a) => train_cmd(a, stdout, stderr),
        Command::Recommend(a) => recommend(a, seed, stdout),
        Command::Rank(a) => rank(a, stdout, stderr),
        Command::Sequence(a) => sequence(a, seed, stdout),
        Command::Eval(a) => eval(a, stdout, stderr),
        Command::DemoGen(a) => demo_gen(a, seed, stdout, stderr),
        Command::Serve(a) => serve(a),
    }
}

fn build_space(a: BuildSpaceArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let schema: Vec<FieldRef> = parse_json(&read(&a.schema)?, "schema")?;
    let config: EnumerationConfig = parse_json(&read(&a.config)?, "enumeration config")?;
    let space = enumerate_space(&schema, &config).map_err(input)?;
    let counts = space.counts();
    let summary = json!({ "states": counts.states, "edges": counts.edges, "fingerprint": space.fingerprint() });
    match &a.out {
        Some(path) => {
            emit(&space.to_json(), Some(path), stdout)?;
            emit(&pretty(&summary), None, stdout)
        }
        None => {
            let _ = writeln!(stderr, "{} states, {} edges", counts.states, counts.edges);
            emit(&space.to_json(), None, stdout)
        }
    }
}

fn train_cmd(a: TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let defaults = match &a.config {
        Some(p) => Defaults::from_json(&read(p)?).map_err(|e| input(format!("{}: {e}", p.display())))?,
        None => Defaults::default(),
    };
    let space = load_space(&a.space)?;
    let corpus = parse_demos(&read(&a.demos)?, &space, &defaults.tasks).map_err(|e| input(format!("{}: {e}", a.demos.display())))?;
    let task = Task::new(&a.task);
    if !defaults.tasks.contains(&task) {
        return Err(input(format!("unknown task {task}")));
    }
    let mut hyper = defaults.training.clone();
    if let Some(v) = a.learning_rate {
        hyper.learning_rate = v;
    }
    if let Some(v) = a.max_iterations {
        hyper.max_iterations = v;
    }
    if let Some(v) = a.gradient_tolerance {
        hyper.gradient_tolerance = v;
    }
    if a.horizon.is_some() {
        hyper.horizon = a.horizon;
    }
    if let Some(v) = a.initial_distribution {
        hyper.initial_distribution = match v {
            InitialArg::DemoStarts => InitialDistribution::UniformOverDemoStarts,
            InitialArg::AllStates => InitialDistribution::UniformOverAllStates,
        };
    }
    if a.no_line_search {
        hyper.line_search = false;
    }
    hyper.validate().map_err(input)?;
    let trained = train(&corpus, &task, space.graph(), &hyper).map_err(failed)?;
    let d = &trained.diagnostics;
    let _ = writeln!(
        stderr,
        "task {task}: {} iterations, converged: {}, gradient norm {:.3e}, log-likelihood {:.6}",
        d.iterations,
        d.converged,
        d.final_gradient_norm,
        d.loglik_trace.last().copied().unwrap_or(f64::NAN)
    );
    let file = ModelFile::from_trained(trained, hyper, defaults.lambda, defaults.gamma, space.fingerprint());
    match &a.out {
        Some(path) => {
            emit(&file.to_json(), Some(path), stdout)?;
            let summary = json!({
                "task": file.task,
                "theta": file.theta,
                "iterations": file.diagnostics.iterations,
                "converged": file.diagnostics.converged,
                "final_gradient_norm": file.diagnostics.final_gradient_norm,
            });
            emit(&pretty(&summary), None, stdout)
        }
        None => emit(&file.to_json(), None, stdout),
    }
}

fn recommend(a: RecommendArgs, seed: u64, stdout: &mut dyn Write) -> Result<(), CliError> {
    let Loaded { space, model } = load_model_args(&a.model)?;
    let state = resolve_state(&space, a.state.as_deref(), seed)?;
    let vi = Defaults::default().value_iteration;
    let values = value_iteration(space.graph(), &model, vi.tolerance, vi.max_sweeps).map_err(failed)?;
    let recs = recommend_next(space.graph(), &model, &values, state, a.k as usize).map_err(failed)?;
    let items = recs
        .iter()
        .map(|r| {
            Ok(json!({
                "action": r.action,
                "score": r.score,
                "successor": space.spec(r.target).map_err(failed)?,
            }))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let out = json!({ "task": model.task, "state": space.spec(state).map_err(failed)?, "recommendations": items });
    emit(&pretty(&out), a.out.as_deref(), stdout)
}

fn rank(a: RankArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let Loaded { space, model } = load_model_args(&a.model)?;
    let source = resolve_state(&space, Some(&a.source), 0)?;
    let actions: Vec<EditAction> = inline_or_file(&a.actions, "actions")?;
    let ranking = rank_permutations(space.graph(), &model, source, &actions).map_err(input)?;
    if !ranking.excluded.is_empty() {
        let _ = writeln!(stderr, "{} ordering(s) excluded: an edit is inapplicable along the way", ranking.excluded.len());
    }
    let reports = ranking
        .ranked
        .iter()
        .map(|r| SequenceReport::new(r, &space).map_err(failed))
        .collect::<Result<Vec<_>, _>>()?;
    emit(&pretty(&reports), a.out.as_deref(), stdout)
}

fn sequence(a: SequenceArgs, seed: u64, stdout: &mut dyn Write) -> Result<(), CliError> {
    let Loaded { space, model } = load_model_args(&a.model)?;
    let start = resolve_state(&space, a.state.as_deref(), seed)?;
    let target = a.target.as_deref().map(|t| resolve_state(&space, Some(t), 0)).transpose()?;
    let vi = Defaults::default().value_iteration;
    let values = value_iteration(space.graph(), &model, vi.tolerance, vi.max_sweeps).map_err(failed)?;
    let seq = generate_sequence(space.graph(), &model, &values, start, StopRule { max_steps: a.max_steps, target }).map_err(failed)?;
    emit(&pretty(&SequenceReport::new(&seq, &space).map_err(failed)?), a.out.as_deref(), stdout)
}

fn eval(a: EvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let space = load_space(&a.space)?;
    let costs = load_costs(a.costs.as_deref(), &space)?;
    let vi = Defaults::default().value_iteration;
    let mut rankers = BTreeMap::new();
    for path in &a.models {
        let model = load_model(path, &space, costs.clone())?;
        let task = model.task.clone();
        let set = RankerSet::from_full(&space, model, vi.tolerance, vi.max_sweeps).map_err(failed)?;
        if rankers.insert(task.clone(), set).is_some() {
            return Err(input(format!("two models for task {task}")));
        }
    }
    let items: Vec<RankItem> = parse_json(&read(&a.items)?, "items")?;
    let ratings = parse_ratings_csv(&read(&a.ratings)?).map_err(|e| input(format!("{}: {e}", a.ratings.display())))?;
    let mode = match a.mode {
        ModeArg::Sequence => ScoreMode::Sequence,
        ModeArg::NextAction => ScoreMode::NextAction,
    };
    let result = compare_by_task(&space, &rankers, &items, &ratings, mode).map_err(failed)?;
    for (task, table) in &result.per_task {
        let _ = write!(stderr, "{task} ({} items)\n{}\n", table.items, table.to_text());
    }
    let _ = write!(stderr, "pooled ({} items)\n{}", result.pooled.items, result.pooled.to_text());
    emit(&pretty(&result), a.out.as_deref(), stdout)
}

fn demo_gen(a: DemoGenArgs, seed: u64, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let space = load_space(&a.space)?;
    let planted: BTreeMap<Task, FeatureVector> = parse_json(&read(&a.planted)?, "planted weights")?;
    let tasks: Vec<Task> = match &a.task {
        Some(t) => {
            let t = Task::new(t);
            if !planted.contains_key(&t) {
                return Err(input(format!("no planted weights for task {t}")));
            }
            vec![t]
        }
        None => planted.keys().cloned().collect(),
    };
    if a.length == 0 || a.count == 0 {
        return Err(input("--count and --length must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = format!("synthetic: sampled from planted weights, seed {seed}");
    let mut demos = Vec::new();
    for task in &tasks {
        let mut batch = generate_demos(&planted[task], space.graph(), task, a.count, a.length, &source, &mut rng).map_err(failed)?;
        batch.retain(|d| !d.trajectory.is_empty());
        let _ = writeln!(stderr, "{task}: {} demonstrations", batch.len());
        demos.extend(batch);
    }
    let corpus = DemoCorpus::new(space.fingerprint(), demos);
    emit(&corpus.to_jsonl(&space).map_err(failed)?, a.out.as_deref(), stdout)
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut config = ServiceConfig::from_file(&a.config).map_err(input)?;
    config.apply_env(|k| std::env::var(k).ok()).map_err(input)?;
    if let Some(p) = a.port {
        config.port = p;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(failed)?;
    runtime.block_on(chartseq_server::serve(config)).map_err(failed)
}
