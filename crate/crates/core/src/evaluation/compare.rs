use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{kendall_tau_b, spearman_rho, EvalError};
use crate::demonstrations::Task;
use crate::design_space::{ChartSpec, DesignSpace, EditAction};
use crate::planner::{sequence_score, value_iteration, ValueTable};
use crate::reward::RewardModel;

/// Row labels, in table order.
pub const RANKER_LABELS: [&str; 3] = ["Full model", "Task-Only", "Cost-only (GraphScape-style)"];

/// Mean human rating per item id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingSet {
    ratings: BTreeMap<String, f64>,
}

impl RatingSet {
    pub fn new(ratings: BTreeMap<String, f64>) -> Result<Self, EvalError> {
        if ratings.len() < 2 {
            return Err(EvalError::Ratings(format!("need at least 2 rated items, got {}", ratings.len())));
        }
        if let Some((id, _)) = ratings.iter().find(|(_, v)| !v.is_finite()) {
            return Err(EvalError::Ratings(format!("rating for {id} is not finite")));
        }
        Ok(RatingSet { ratings })
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.ratings.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }
}

#[derive(Deserialize)]
struct RatingRow {
    item_id: String,
    mean_rating: f64,
}

/// CSV with header `item_id,mean_rating`.
pub fn parse_ratings_csv(bytes: &[u8]) -> Result<RatingSet, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let mut ratings = BTreeMap::new();
    for row in reader.deserialize::<RatingRow>() {
        let row = row.map_err(|e| EvalError::Ratings(e.to_string()))?;
        if ratings.insert(row.item_id.clone(), row.mean_rating).is_some() {
            return Err(EvalError::Ratings(format!("duplicate item id {}", row.item_id)));
        }
    }
    RatingSet::new(ratings)
}

/// Something to rank: a sequence of edits applied to a source chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankItem {
    pub id: String,
    pub task: Task,
    pub source: ChartSpec,
    pub actions: Vec<EditAction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// Discounted reward of the whole action sequence.
    Sequence,
    /// Single next action scored by its one-step backup `R + γV(s')`.
    NextAction,
}

#[derive(Debug, Clone)]
pub struct Ranker {
    pub model: RewardModel,
    pub values: ValueTable,
}

impl Ranker {
    fn score(&self, space: &DesignSpace, item: &RankItem, mode: ScoreMode) -> Result<f64, EvalError> {
        let unscorable = |reason: String| EvalError::Unscorable { id: item.id.clone(), reason };
        let graph = space.graph();
        let source = space
            .state_index(&item.source)
            .map_err(|e| unscorable(e.to_string()))?;
        match mode {
            ScoreMode::Sequence => {
                sequence_score(graph, &self.model, source, &item.actions).map_err(|e| unscorable(e.to_string()))
            }
            ScoreMode::NextAction => {
                let [action] = item.actions.as_slice() else {
                    return Err(unscorable(format!("next-action items need exactly one action, got {}", item.actions.len())));
                };
                let edge = graph.find_edge(source, action).map_err(|e| unscorable(e.to_string()))?;
                let r = self
                    .model
                    .transition_reward(graph.state_features(source), edge)
                    .map_err(|e| unscorable(e.to_string()))?;
                Ok(r + self.model.gamma * self.values.values[edge.target])
            }
        }
    }
}

/// The full model and its two ablations, each with its own value table.
#[derive(Debug, Clone)]
pub struct RankerSet {
    pub full: Ranker,
    pub task_only: Ranker,
    pub cost_only: Ranker,
}

impl RankerSet {
    pub fn from_full(space: &DesignSpace, full: RewardModel, tolerance: f64, max_sweeps: usize) -> Result<Self, EvalError> {
        let build = |model: RewardModel| -> Result<Ranker, EvalError> {
            let values = value_iteration(space.graph(), &model, tolerance, max_sweeps)?;
            Ok(Ranker { model, values })
        };
        Ok(RankerSet {
            task_only: build(full.task_only())?,
            cost_only: build(full.cost_only())?,
            full: build(full)?,
        })
    }

    fn in_order(&self) -> [&Ranker; 3] {
        [&self.full, &self.task_only, &self.cost_only]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub ranker: String,
    pub kendall_tau_b: f64,
    pub spearman_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub items: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    fn from_scores(scores: &[Vec<f64>; 3], ratings: &[f64]) -> Result<Self, EvalError> {
        let rows = RANKER_LABELS
            .iter()
            .zip(scores)
            .map(|(label, s)| {
                Ok(ComparisonRow {
                    ranker: label.to_string(),
                    kendall_tau_b: kendall_tau_b(s, ratings)?,
                    spearman_rho: spearman_rho(s, ratings)?,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(ComparisonTable { items: ratings.len(), rows })
    }

    /// Fixed-width text rendering with one row per ranker.
    pub fn to_text(&self) -> String {
        let width = RANKER_LABELS.iter().map(|l| l.len()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>14}  {:>22}", "", "Kendall tau_b", "Spearman's coefficient");
        for row in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>14.4}  {:>22.4}", row.ranker, row.kendall_tau_b, row.spearman_rho);
        }
        out
    }
}

fn collect_scores<'a>(
    space: &DesignSpace,
    items: impl IntoIterator<Item = (&'a RankItem, &'a RankerSet)>,
    ratings: &RatingSet,
    mode: ScoreMode,
) -> Result<([Vec<f64>; 3], Vec<f64>), EvalError> {
    let mut scores: [Vec<f64>; 3] = Default::default();
    let mut rated = Vec::new();
    for (item, rankers) in items {
        let r = ratings
            .get(&item.id)
            .ok_or_else(|| EvalError::Unscorable { id: item.id.clone(), reason: "no rating".into() })?;
        for (slot, ranker) in scores.iter_mut().zip(rankers.in_order()) {
            slot.push(ranker.score(space, item, mode)?);
        }
        rated.push(r);
    }
    Ok((scores, rated))
}

/// τ_b and ρ of each ranker's scores against the human ratings.
pub fn compare_rankers(
    space: &DesignSpace,
    rankers: &RankerSet,
    items: &[RankItem],
    ratings: &RatingSet,
    mode: ScoreMode,
) -> Result<ComparisonTable, EvalError> {
    let (scores, rated) = collect_scores(space, items.iter().map(|i| (i, rankers)), ratings, mode)?;
    ComparisonTable::from_scores(&scores, &rated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskComparison {
    pub per_task: BTreeMap<Task, ComparisonTable>,
    pub pooled: ComparisonTable,
}

/// Per-task tables plus one pooled table over all items, each item scored
/// by the rankers of its own task.
pub fn compare_by_task(
    space: &DesignSpace,
    rankers: &BTreeMap<Task, RankerSet>,
    items: &[RankItem],
    ratings: &RatingSet,
    mode: ScoreMode,
) -> Result<TaskComparison, EvalError> {
    let mut paired = Vec::with_capacity(items.len());
    for item in items {
        let set = rankers.get(&item.task).ok_or_else(|| EvalError::NoRankers(item.task.clone()))?;
        paired.push((item, set));
    }
    let mut per_task = BTreeMap::new();
    for (task, set) in rankers {
        let task_items: Vec<RankItem> = items.iter().filter(|i| &i.task == task).cloned().collect();
        if task_items.len() >= 2 {
            per_task.insert(task.clone(), compare_rankers(space, set, &task_items, ratings, mode)?);
        }
    }
    let (scores, rated) = collect_scores(space, paired, ratings, mode)?;
    Ok(TaskComparison { per_task, pooled: ComparisonTable::from_scores(&scores, &rated)? })
}
