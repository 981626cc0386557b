//! Fixed 14-component feature layout for states and actions.
//!
//! | index | meaning            |
//! |-------|--------------------|
//! | 0..=2 | mark: bar, line, point (one-hot) |
//! | 3..=6 | channel present: x, y, color, size |
//! | 7, 8  | aggregate on x, y  |
//! | 9, 10 | bin on x, y        |
//! | 11,12 | sort on x, y       |
//! | 13    | filter present     |

use serde::{Deserialize, Serialize};

use super::{Channel, ChartSpec, Mark, SpaceError, Transform};

pub const FEATURE_DIM: usize = 14;

/// Real-valued vector in feature space (rewards weights, expectations).
pub type FeatureVector = [f64; FEATURE_DIM];

pub const FILTER_SLOT: usize = 13;

pub fn mark_slot(mark: Mark) -> usize {
    mark.index()
}

pub fn channel_slot(channel: Channel) -> usize {
    3 + channel.index()
}

/// Slot of a transform flag; `None` for non-positional channels.
pub fn transform_slot(transform: Transform, channel: Channel) -> Option<usize> {
    let axis = match channel {
        Channel::X => 0,
        Channel::Y => 1,
        _ => return None,
    };
    let base = match transform {
        Transform::Aggregate => 7,
        Transform::Bin => 9,
        Transform::Sort => 11,
    };
    Some(base + axis)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateFeatures(pub [u8; FEATURE_DIM]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionFeatures(pub [i8; FEATURE_DIM]);

impl StateFeatures {
    pub fn to_real(&self) -> FeatureVector {
        self.0.map(f64::from)
    }

    /// Checks the layout invariants (single mark, x present, flags only
    /// on present axes).
    pub fn check_layout(&self) -> Result<(), SpaceError> {
        let v = &self.0;
        if v.iter().any(|&b| b > 1) {
            return Err(SpaceError::InvalidFeatures("components must be 0 or 1".into()));
        }
        if v[0] + v[1] + v[2] != 1 {
            return Err(SpaceError::InvalidFeatures("exactly one mark bit must be set".into()));
        }
        if v[3] != 1 {
            return Err(SpaceError::InvalidFeatures("x presence bit must be set".into()));
        }
        for (axis, presence) in [(0usize, 3usize), (1, 4)] {
            for base in [7, 9, 11] {
                if v[base + axis] > v[presence] {
                    return Err(SpaceError::InvalidFeatures(format!(
                        "transform slot {} set on an absent axis",
                        base + axis
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn decode(&self) -> DecodedFeatures {
        let v = &self.0;
        let mark = Mark::ALL
            .into_iter()
            .find(|m| v[mark_slot(*m)] == 1)
            .unwrap_or(Mark::Bar);
        let present = Channel::ALL.map(|c| v[channel_slot(c)] == 1);
        let flag = |t, c| transform_slot(t, c).is_some_and(|i| v[i] == 1);
        DecodedFeatures {
            mark,
            present,
            aggregate: [flag(Transform::Aggregate, Channel::X), flag(Transform::Aggregate, Channel::Y)],
            bin: [flag(Transform::Bin, Channel::X), flag(Transform::Bin, Channel::Y)],
            sort: [flag(Transform::Sort, Channel::X), flag(Transform::Sort, Channel::Y)],
            filter: v[FILTER_SLOT] == 1,
        }
    }
}

impl ActionFeatures {
    pub const ZERO: ActionFeatures = ActionFeatures([0; FEATURE_DIM]);

    pub fn to_real(&self) -> FeatureVector {
        self.0.map(f64::from)
    }

    pub fn unit(slot: usize, sign: i8) -> Self {
        let mut v = [0i8; FEATURE_DIM];
        v[slot] = sign;
        ActionFeatures(v)
    }

    /// Componentwise `target - source`.
    pub fn difference(source: &StateFeatures, target: &StateFeatures) -> Self {
        let mut v = [0i8; FEATURE_DIM];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = target.0[i] as i8 - source.0[i] as i8;
        }
        ActionFeatures(v)
    }
}

/// Presence and transform flags recovered from a state feature vector.
/// Field identities are not part of the layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedFeatures {
    pub mark: Mark,
    pub present: [bool; 4],
    pub aggregate: [bool; 2],
    pub bin: [bool; 2],
    pub sort: [bool; 2],
    pub filter: bool,
}

impl DecodedFeatures {
    pub fn of_spec(spec: &ChartSpec) -> Self {
        let axis_flag = |t: Transform| {
            [Channel::X, Channel::Y].map(|c| spec.channel(c).is_some_and(|cs| cs.get(t)))
        };
        DecodedFeatures {
            mark: spec.mark,
            present: Channel::ALL.map(|c| spec.channels.contains_key(&c)),
            aggregate: axis_flag(Transform::Aggregate),
            bin: axis_flag(Transform::Bin),
            sort: axis_flag(Transform::Sort),
            filter: spec.filter,
        }
    }
}

/// Featurizes a chart state. Fails on specs violating the structural
/// invariants.
pub fn featurize_state(spec: &ChartSpec) -> Result<StateFeatures, SpaceError> {
    spec.validate()?;
    let mut v = [0u8; FEATURE_DIM];
    v[mark_slot(spec.mark)] = 1;
    for (&channel, cs) in &spec.channels {
        v[channel_slot(channel)] = 1;
        for t in Transform::ALL {
            if cs.get(t) {
                if let Some(slot) = transform_slot(t, channel) {
                    v[slot] = 1;
                }
            }
        }
    }
    if spec.filter {
        v[FILTER_SLOT] = 1;
    }
    Ok(StateFeatures(v))
}

pub fn dot(theta: &FeatureVector, x: &FeatureVector) -> f64 {
    theta.iter().zip(x).map(|(a, b)| a * b).sum()
}

pub fn add_assign(acc: &mut FeatureVector, x: &FeatureVector) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

pub fn scaled_add_assign(acc: &mut FeatureVector, weight: f64, x: &FeatureVector) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += weight * b;
    }
}

pub fn norm(x: &FeatureVector) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::{ChannelSpec, FieldKind, FieldRef};

    fn q(name: &str) -> FieldRef {
        FieldRef::new(name, FieldKind::Quantitative)
    }

    #[test]
    fn bar_with_aggregated_y() {
        let spec = ChartSpec::new(Mark::Bar, ChannelSpec::plain(FieldRef::new("Origin", FieldKind::Nominal)))
            .with_channel(Channel::Y, ChannelSpec::plain(q("Horsepower")).with(Transform::Aggregate));
        let f = featurize_state(&spec).unwrap();
        assert_eq!(f.0, [1, 0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn scatter_with_color() {
        let spec = ChartSpec::new(Mark::Point, ChannelSpec::plain(q("a")))
            .with_channel(Channel::Y, ChannelSpec::plain(q("b")))
            .with_channel(Channel::Color, ChannelSpec::plain(FieldRef::new("c", FieldKind::Nominal)));
        let f = featurize_state(&spec).unwrap();
        assert_eq!(f.0, [0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(featurize_state(&spec).unwrap(), f);
        f.check_layout().unwrap();
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut no_x = ChartSpec::new(Mark::Bar, ChannelSpec::plain(q("a")));
        no_x.channels.clear();
        assert!(featurize_state(&no_x).is_err());

        let nominal_agg = ChartSpec::new(
            Mark::Bar,
            ChannelSpec::plain(FieldRef::new("n", FieldKind::Nominal)).with(Transform::Aggregate),
        );
        assert!(featurize_state(&nominal_agg).is_err());

        let color_sort = ChartSpec::new(Mark::Bar, ChannelSpec::plain(q("a")))
            .with_channel(Channel::Color, ChannelSpec::plain(q("b")).with(Transform::Sort));
        assert!(featurize_state(&color_sort).is_err());

        let ordinal_bin = ChartSpec::new(
            Mark::Line,
            ChannelSpec::plain(FieldRef::new("o", FieldKind::Ordinal)).with(Transform::Bin),
        );
        assert!(featurize_state(&ordinal_bin).is_err());
    }

    #[test]
    fn layout_check_catches_orphan_flags() {
        let mut v = [0u8; FEATURE_DIM];
        v[0] = 1;
        v[3] = 1;
        v[8] = 1;
        assert!(StateFeatures(v).check_layout().is_err());
        v[4] = 1;
        assert!(StateFeatures(v).check_layout().is_ok());
    }
}
