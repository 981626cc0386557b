//! Grammar-style chart specifications: the states of the design space.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SpaceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Quantitative,
    Nominal,
    Ordinal,
    Temporal,
}

impl FieldKind {
    pub const ALL: [FieldKind; 4] = [
        FieldKind::Quantitative,
        FieldKind::Nominal,
        FieldKind::Ordinal,
        FieldKind::Temporal,
    ];

    pub fn can_aggregate(self) -> bool {
        self == FieldKind::Quantitative
    }

    pub fn can_bin(self) -> bool {
        matches!(self, FieldKind::Quantitative | FieldKind::Temporal)
    }
}

/// A data field that can be mapped onto a visual channel.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FieldRef {
    pub name: String,
    pub kind: FieldKind,
}

impl FieldRef {
    pub fn new(name: impl Into<String>, kind: FieldKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Bar,
    Line,
    Point,
}

impl Mark {
    pub const ALL: [Mark; 3] = [Mark::Bar, Mark::Line, Mark::Point];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mark::Bar => "bar",
            Mark::Line => "line",
            Mark::Point => "point",
        })
    }
}

/// Encoding channels. The derived order (x < y < color < size) is the
/// canonical channel order used for edge sorting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    X,
    Y,
    Color,
    Size,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::X, Channel::Y, Channel::Color, Channel::Size];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Only positional channels carry aggregate/bin/sort.
    pub fn is_positional(self) -> bool {
        matches!(self, Channel::X | Channel::Y)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Color => "color",
            Channel::Size => "size",
        })
    }
}

/// Field transforms that live on a positional channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Aggregate,
    Bin,
    Sort,
}

impl Transform {
    pub const ALL: [Transform; 3] = [Transform::Aggregate, Transform::Bin, Transform::Sort];
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Aggregate => "aggregate",
            Transform::Bin => "bin",
            Transform::Sort => "sort",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub field: FieldRef,
    #[serde(default, skip_serializing_if = "is_false")]
    pub aggregate: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub bin: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub sort: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ChannelSpec {
    pub fn plain(field: FieldRef) -> Self {
        Self {
            field,
            aggregate: false,
            bin: false,
            sort: false,
        }
    }

    pub fn with(mut self, transform: Transform) -> Self {
        self.set(transform, true);
        self
    }

    pub fn get(&self, transform: Transform) -> bool {
        match transform {
            Transform::Aggregate => self.aggregate,
            Transform::Bin => self.bin,
            Transform::Sort => self.sort,
        }
    }

    pub fn set(&mut self, transform: Transform, on: bool) {
        match transform {
            Transform::Aggregate => self.aggregate = on,
            Transform::Bin => self.bin = on,
            Transform::Sort => self.sort = on,
        }
    }

    pub fn has_transforms(&self) -> bool {
        self.aggregate || self.bin || self.sort
    }
}

/// A chart: one mark, a partial channel map and an optional filter.
///
/// `predicate` identifies which filter predicate is active when the
/// enumeration distinguishes predicate variants; it is `None` whenever
/// only the boolean filter flag is modeled.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChartSpec {
    pub mark: Mark,
    pub channels: BTreeMap<Channel, ChannelSpec>,
    #[serde(default)]
    pub filter: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<u8>,
}

impl ChartSpec {
    pub fn new(mark: Mark, x: ChannelSpec) -> Self {
        let mut channels = BTreeMap::new();
        channels.insert(Channel::X, x);
        Self {
            mark,
            channels,
            filter: false,
            predicate: None,
        }
    }

    pub fn with_channel(mut self, channel: Channel, spec: ChannelSpec) -> Self {
        self.channels.insert(channel, spec);
        self
    }

    pub fn with_filter(mut self) -> Self {
        self.filter = true;
        self
    }

    pub fn channel(&self, channel: Channel) -> Option<&ChannelSpec> {
        self.channels.get(&channel)
    }

    /// Checks the structural invariants that hold independently of any
    /// enumeration config.
    pub fn validate(&self) -> Result<(), SpaceError> {
        let invalid = |reason: String| Err(SpaceError::InvalidSpec(reason));
        if !self.channels.contains_key(&Channel::X) {
            return invalid("channel x is required".into());
        }
        for (channel, spec) in &self.channels {
            if spec.field.name.is_empty() {
                return invalid(format!("channel {channel} has an empty field name"));
            }
            if !channel.is_positional() && spec.has_transforms() {
                return invalid(format!("transforms are only allowed on x and y, found on {channel}"));
            }
            if spec.aggregate && !spec.field.kind.can_aggregate() {
                return invalid(format!(
                    "aggregate on {channel} requires a quantitative field, got {:?}",
                    spec.field.kind
                ));
            }
            if spec.bin && !spec.field.kind.can_bin() {
                return invalid(format!(
                    "bin on {channel} requires a quantitative or temporal field, got {:?}",
                    spec.field.kind
                ));
            }
        }
        if self.predicate.is_some() && !self.filter {
            return invalid("filter predicate set without an active filter".into());
        }
        Ok(())
    }
}
