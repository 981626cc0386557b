//! Rank-correlation statistics and the three-way ranker comparison.

mod compare;
mod rank;

pub use compare::{
    compare_by_task, compare_rankers, parse_ratings_csv, ComparisonRow, ComparisonTable, RankItem, Ranker, RankerSet,
    RatingSet, ScoreMode, TaskComparison, RANKER_LABELS,
};
pub use rank::{kendall_tau_b, mid_ranks, spearman_rho};

use thiserror::Error;

use crate::demonstrations::Task;
use crate::design_space::SpaceError;
use crate::planner::PlanError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("rankings differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 items, got {0}")]
    TooShort(usize),
    #[error("rankings contain non-finite values")]
    NonFinite,
    #[error("tau-b is undefined when every item is tied")]
    AllTied,
    #[error("rank correlation is undefined for a constant ranking")]
    ZeroVariance,
    #[error("ratings: {0}")]
    Ratings(String),
    #[error("item {id}: {reason}")]
    Unscorable { id: String, reason: String },
    #[error("no rankers for task {0}")]
    NoRankers(Task),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}
