use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::http::StatusCode;
use chartseq_core::config::Defaults;
use chartseq_core::demonstrations::Task;
use chartseq_core::design_space::{ChartSpec, DesignSpace, EditAction};
use chartseq_core::model::ModelFile;
use chartseq_core::planner::{rank_permutations, recommend_next, value_iteration, PlanError, SequenceReport, ValueTable};
use chartseq_core::reward::{load_cost_table, CostTable, RewardModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{ServiceConfig, ServiceError};

/// A task's reward model with its precomputed value table.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: RewardModel,
    pub values: ValueTable,
    pub horizon: usize,
}

/// Error returned to HTTP clients.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown-session", format!("no session {id}"))
    }

    fn unknown_task(task: &Task) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown-task", format!("no model loaded for task {task}"))
    }

    fn invalid_spec(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-spec", e.to_string())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

#[derive(Debug, Clone)]
struct HistoryRecord {
    action: EditAction,
    state: usize,
    timestamp: String,
}

#[derive(Debug)]
struct Session {
    id: String,
    task: Task,
    start: usize,
    state: usize,
    history: Vec<HistoryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: EditAction,
    pub state: ChartSpec,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub task: Task,
    pub start: ChartSpec,
    pub state: ChartSpec,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub name: Task,
    pub model_available: bool,
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub action: EditAction,
    pub score: f64,
    /// Successor chart, for client-side previews.
    pub successor: ChartSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub session: String,
    pub state: ChartSpec,
    pub recommendations: Vec<RecommendationView>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
enum LogEvent {
    Create { id: String, task: Task, state: ChartSpec, timestamp: String },
    Apply { id: String, action: EditAction, state: ChartSpec, timestamp: String },
}

type SessionMap = BTreeMap<String, Arc<tokio::sync::Mutex<Session>>>;

/// Shared service state. Models and the space are read-only; sessions are
/// individually locked so requests on one session are serialized while
/// different sessions proceed concurrently.
pub struct AppState {
    space: DesignSpace,
    models: BTreeMap<Task, LoadedModel>,
    sessions: RwLock<SessionMap>,
    rng: Mutex<ChaCha8Rng>,
    next_id: AtomicU64,
    log: Option<Mutex<File>>,
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState")
            .field("states", &self.space.len())
            .field("tasks", &self.models.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl AppState {
    /// Reads the space, cost table and every `*.json` model in the model
    /// directory, then replays the session log if one exists.
    pub fn load(config: &ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| ServiceError::io(p, e));
        let space = DesignSpace::from_json(&read(&config.space_file)?)?;
        let costs = load_cost_table(&read(&config.cost_file)?, space.graph())?;
        let mut paths: Vec<_> = std::fs::read_dir(&config.model_dir)
            .map_err(|e| ServiceError::io(&config.model_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut models = Vec::new();
        for p in paths {
            let model_err = |reason: String| ServiceError::Model { path: p.display().to_string(), reason };
            let m = ModelFile::from_json(&read(&p)?).map_err(|e| model_err(e.to_string()))?;
            m.check_space(space.fingerprint()).map_err(|e| model_err(e.to_string()))?;
            models.push(m);
        }
        Self::new(space, models, costs, config.seed, config.session_log.as_deref())
    }

    pub fn new(
        space: DesignSpace,
        models: Vec<ModelFile>,
        costs: CostTable,
        seed: u64,
        session_log: Option<&Path>,
    ) -> Result<Arc<Self>, ServiceError> {
        let vi = Defaults::default().value_iteration;
        let mut loaded = BTreeMap::new();
        for m in models {
            let model = m.reward_model(costs.clone()).map_err(|e| ServiceError::Model {
                path: m.task.to_string(),
                reason: e.to_string(),
            })?;
            let values = value_iteration(space.graph(), &model, vi.tolerance, vi.max_sweeps)?;
            if loaded.insert(m.task.clone(), LoadedModel { model, values, horizon: m.horizon }).is_some() {
                return Err(ServiceError::Model { path: m.task.to_string(), reason: "duplicate task".into() });
            }
        }
        let mut state = AppState {
            space,
            models: loaded,
            sessions: RwLock::new(BTreeMap::new()),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            next_id: AtomicU64::new(1),
            log: None,
        };
        if let Some(path) = session_log {
            if path.exists() {
                state.replay(&std::fs::read(path).map_err(|e| ServiceError::io(path, e))?)?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| ServiceError::io(path, e))?;
            state.log = Some(Mutex::new(file));
        }
        Ok(Arc::new(state))
    }

    fn replay(&mut self, bytes: &[u8]) -> Result<(), ServiceError> {
        let text = String::from_utf8_lossy(bytes);
        let sessions = self.sessions.get_mut().expect("sessions lock");
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| ServiceError::Log { line, reason };
            match serde_json::from_str(raw).map_err(|e| bad(e.to_string()))? {
                LogEvent::Create { id, task, state, .. } => {
                    if !self.models.contains_key(&task) {
                        return Err(bad(format!("no model for task {task}")));
                    }
                    let s = self.space.state_index(&state).map_err(|e| bad(e.to_string()))?;
                    if let Some(n) = id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                        let next = self.next_id.get_mut();
                        *next = (*next).max(n + 1);
                    }
                    let session = Session { id: id.clone(), task, start: s, state: s, history: Vec::new() };
                    sessions.insert(id, Arc::new(tokio::sync::Mutex::new(session)));
                }
                LogEvent::Apply { id, action, state, timestamp } => {
                    let session = sessions.get(&id).ok_or_else(|| bad(format!("apply to unknown session {id}")))?;
                    let mut session = session.try_lock().expect("replay is single-threaded");
                    let next = self.space.apply_action(session.state, &action).map_err(|e| bad(e.to_string()))?;
                    if self.space.spec(next)? != &state {
                        return Err(bad(format!("session {id}: replayed state differs from the logged one")));
                    }
                    session.state = next;
                    session.history.push(HistoryRecord { action, state: next, timestamp });
                }
            }
        }
        Ok(())
    }

    fn append_log(&self, event: &LogEvent) -> Result<(), ApiError> {
        if let Some(log) = &self.log {
            let mut line = serde_json::to_string(event).map_err(ApiError::internal)?;
            line.push('\n');
            let mut file = log.lock().map_err(ApiError::internal)?;
            file.write_all(line.as_bytes()).and_then(|_| file.flush()).map_err(ApiError::internal)?;
        }
        Ok(())
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn task_names(&self) -> Vec<Task> {
        self.models.keys().cloned().collect()
    }

    pub fn model(&self, task: &Task) -> Option<&LoadedModel> {
        self.models.get(task)
    }

    pub fn tasks(&self) -> Vec<TaskInfo> {
        self.models
            .iter()
            .map(|(task, m)| TaskInfo { name: task.clone(), model_available: true, lambda: m.model.lambda, gamma: m.model.gamma })
            .collect()
    }

    fn view(&self, s: &Session) -> Result<SessionView, ApiError> {
        let spec = |i: usize| self.space.spec(i).cloned().map_err(ApiError::internal);
        Ok(SessionView {
            id: s.id.clone(),
            task: s.task.clone(),
            start: spec(s.start)?,
            state: spec(s.state)?,
            history: s
                .history
                .iter()
                .map(|h| Ok(HistoryEntry { action: h.action.clone(), state: spec(h.state)?, timestamp: h.timestamp.clone() }))
                .collect::<Result<_, ApiError>>()?,
        })
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
        let map = self.sessions.read().map_err(ApiError::internal)?;
        map.get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
    }

    /// New session at `start`, or at a seeded-random state with outgoing
    /// edges when `start` is omitted.
    pub fn create_session(&self, task: &Task, start: Option<&ChartSpec>) -> Result<SessionView, ApiError> {
        if !self.models.contains_key(task) {
            return Err(ApiError::unknown_task(task));
        }
        let state = match start {
            Some(spec) => {
                spec.validate().map_err(ApiError::invalid_spec)?;
                self.space.state_index(spec).map_err(ApiError::invalid_spec)?
            }
            None => {
                let live: Vec<usize> = (0..self.space.len()).filter(|&s| !self.space.graph().is_dead_end(s)).collect();
                if live.is_empty() {
                    return Err(ApiError::internal("design space has no state with outgoing edges"));
                }
                let mut rng = self.rng.lock().map_err(ApiError::internal)?;
                live[rng.gen_range(0..live.len())]
            }
        };
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let session = Session { id: id.clone(), task: task.clone(), start: state, state, history: Vec::new() };
        let view = self.view(&session)?;
        // log before publishing so a replay never sees an apply first
        self.append_log(&LogEvent::Create { id: id.clone(), task: task.clone(), state: view.state.clone(), timestamp: now() })?;
        self.sessions
            .write()
            .map_err(ApiError::internal)?
            .insert(id, Arc::new(tokio::sync::Mutex::new(session)));
        Ok(view)
    }

    pub async fn get_session(&self, id: &str) -> Result<SessionView, ApiError> {
        let session = self.session(id)?;
        let s = session.lock().await;
        self.view(&s)
    }

    pub async fn recommend(&self, id: &str, k: usize) -> Result<RecommendResponse, ApiError> {
        if k == 0 {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid-k", "k must be at least 1"));
        }
        let session = self.session(id)?;
        let s = session.lock().await;
        let loaded = self.models.get(&s.task).ok_or_else(|| ApiError::unknown_task(&s.task))?;
        if self.space.graph().is_dead_end(s.state) {
            return Err(ApiError::new(StatusCode::CONFLICT, "dead-end", "the current chart has no outgoing edits"));
        }
        let recs = recommend_next(self.space.graph(), &loaded.model, &loaded.values, s.state, k).map_err(ApiError::internal)?;
        Ok(RecommendResponse {
            session: s.id.clone(),
            state: self.space.spec(s.state).cloned().map_err(ApiError::internal)?,
            recommendations: recs
                .into_iter()
                .map(|r| {
                    Ok(RecommendationView {
                        successor: self.space.spec(r.target).cloned().map_err(ApiError::internal)?,
                        action: r.action,
                        score: r.score,
                    })
                })
                .collect::<Result<_, ApiError>>()?,
        })
    }

    pub async fn apply(&self, id: &str, action: &EditAction) -> Result<SessionView, ApiError> {
        let session = self.session(id)?;
        let mut s = session.lock().await;
        let next = self
            .space
            .apply_action(s.state, action)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "inapplicable-action", e.to_string()))?;
        let timestamp = now();
        let spec = self.space.spec(next).cloned().map_err(ApiError::internal)?;
        self.append_log(&LogEvent::Apply { id: s.id.clone(), action: action.clone(), state: spec, timestamp: timestamp.clone() })?;
        s.state = next;
        s.history.push(HistoryRecord { action: action.clone(), state: next, timestamp });
        self.view(&s)
    }

    pub fn rank_sequences(&self, task: &Task, source: &ChartSpec, actions: &[EditAction]) -> Result<Vec<SequenceReport>, ApiError> {
        let loaded = self.models.get(task).ok_or_else(|| ApiError::unknown_task(task))?;
        source.validate().map_err(ApiError::invalid_spec)?;
        let start = self.space.state_index(source).map_err(ApiError::invalid_spec)?;
        let ranking = rank_permutations(self.space.graph(), &loaded.model, start, actions).map_err(|e| match e {
            PlanError::TooManyActions(_) | PlanError::DuplicateAction(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid-actions", e.to_string())
            }
            PlanError::NoApplicableOrdering => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no-applicable-ordering", e.to_string()),
            other => ApiError::internal(other),
        })?;
        ranking
            .ranked
            .iter()
            .map(|r| SequenceReport::new(r, &self.space).map_err(ApiError::internal))
            .collect()
    }
}
