//! Chart states, edit actions, their feature vectors, and enumeration of
//! the full design-space graph.

mod action;
mod chart;
mod features;
mod graph;
mod space;

pub use action::{featurize_action, EditAction};
pub use chart::{Channel, ChannelSpec, ChartSpec, FieldKind, FieldRef, Mark, Transform};
pub use features::{
    add_assign, channel_slot, dot, featurize_state, mark_slot, norm, scaled_add_assign, transform_slot,
    ActionFeatures, DecodedFeatures, FeatureVector, StateFeatures, FEATURE_DIM, FILTER_SLOT,
};
pub use graph::{FeatureGraph, Transition};
pub use space::{enumerate_space, DesignSpace, EnumerationConfig, SpaceCounts};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("schema is empty")]
    EmptySchema,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid enumeration config: {0}")]
    InvalidConfig(String),
    #[error("enumeration produced no valid states")]
    EmptySpace,
    #[error("invalid chart spec: {0}")]
    InvalidSpec(String),
    #[error("invalid feature vector: {0}")]
    InvalidFeatures(String),
    #[error("action {0} is inconsistent with the source/target pair")]
    InconsistentAction(String),
    #[error("inapplicable action: {0}")]
    Inapplicable(String),
    #[error("state index {index} out of range (space has {len} states)")]
    StateOutOfRange { index: usize, len: usize },
    #[error("chart spec is not a state of this space")]
    UnknownState,
    #[error("malformed space: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
