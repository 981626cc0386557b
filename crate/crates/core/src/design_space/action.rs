//! Edit operations between chart specifications.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::features::{channel_slot, mark_slot, transform_slot, ActionFeatures, StateFeatures, FILTER_SLOT};
use super::{Channel, ChannelSpec, ChartSpec, FieldRef, Mark, SpaceError, Transform};

/// One edit operation. Serialized with a `kind` tag, e.g.
/// `{"kind":"add-field","channel":"color","field":{"name":"Origin","kind":"nominal"}}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EditAction {
    ChangeMark { mark: Mark },
    AddField { channel: Channel, field: FieldRef },
    RemoveField { channel: Channel },
    ModifyField { channel: Channel, field: FieldRef },
    AddAggregate { channel: Channel },
    RemoveAggregate { channel: Channel },
    AddBin { channel: Channel },
    RemoveBin { channel: Channel },
    AddSort { channel: Channel },
    RemoveSort { channel: Channel },
    AddFilter {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        predicate: Option<u8>,
    },
    RemoveFilter,
    ModifyFilter { predicate: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    ChangeMark,
    Add,
    Remove,
    Modify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Target {
    Mark,
    Field,
    Aggregate,
    Bin,
    Sort,
    Filter,
}

impl Target {
    fn of(transform: Transform) -> Self {
        match transform {
            Transform::Aggregate => Target::Aggregate,
            Transform::Bin => Target::Bin,
            Transform::Sort => Target::Sort,
        }
    }
}

impl EditAction {
    pub fn add_transform(transform: Transform, channel: Channel) -> Self {
        match transform {
            Transform::Aggregate => EditAction::AddAggregate { channel },
            Transform::Bin => EditAction::AddBin { channel },
            Transform::Sort => EditAction::AddSort { channel },
        }
    }

    pub fn remove_transform(transform: Transform, channel: Channel) -> Self {
        match transform {
            Transform::Aggregate => EditAction::RemoveAggregate { channel },
            Transform::Bin => EditAction::RemoveBin { channel },
            Transform::Sort => EditAction::RemoveSort { channel },
        }
    }

    /// `(transform, channel, enable)` for the six transform toggles.
    pub fn transform_toggle(&self) -> Option<(Transform, Channel, bool)> {
        use EditAction::*;
        Some(match *self {
            AddAggregate { channel } => (Transform::Aggregate, channel, true),
            RemoveAggregate { channel } => (Transform::Aggregate, channel, false),
            AddBin { channel } => (Transform::Bin, channel, true),
            RemoveBin { channel } => (Transform::Bin, channel, false),
            AddSort { channel } => (Transform::Sort, channel, true),
            RemoveSort { channel } => (Transform::Sort, channel, false),
            _ => return None,
        })
    }

    fn group_and_target(&self) -> (Group, Target) {
        use EditAction::*;
        match self {
            ChangeMark { .. } => (Group::ChangeMark, Target::Mark),
            AddField { .. } => (Group::Add, Target::Field),
            RemoveField { .. } => (Group::Remove, Target::Field),
            ModifyField { .. } => (Group::Modify, Target::Field),
            AddFilter { .. } => (Group::Add, Target::Filter),
            RemoveFilter => (Group::Remove, Target::Filter),
            ModifyFilter { .. } => (Group::Modify, Target::Filter),
            other => {
                let (t, _, on) = other.transform_toggle().expect("transform toggle");
                (if on { Group::Add } else { Group::Remove }, Target::of(t))
            }
        }
    }

    pub fn channel(&self) -> Option<Channel> {
        use EditAction::*;
        match self {
            AddField { channel, .. } | RemoveField { channel } | ModifyField { channel, .. } => Some(*channel),
            other => other.transform_toggle().map(|(_, c, _)| c),
        }
    }

    pub fn is_modify(&self) -> bool {
        matches!(self, EditAction::ModifyField { .. } | EditAction::ModifyFilter { .. })
    }

    /// Parameter-erased kind used for cost lookup, e.g. `add-field-x`,
    /// `remove-sort-y`, `change-mark`, `modify-filter`.
    pub fn kind_key(&self) -> String {
        let (group, target) = self.group_and_target();
        let verb = match group {
            Group::ChangeMark => return "change-mark".to_string(),
            Group::Add => "add",
            Group::Remove => "remove",
            Group::Modify => "modify",
        };
        let noun = match target {
            Target::Mark => unreachable!(),
            Target::Field => "field",
            Target::Aggregate => "aggregate",
            Target::Bin => "bin",
            Target::Sort => "sort",
            Target::Filter => return format!("{verb}-filter"),
        };
        match self.channel() {
            Some(c) => format!("{verb}-{noun}-{c}"),
            None => format!("{verb}-{noun}"),
        }
    }

    /// Applies the edit at the spec level. The result is structurally
    /// validated; membership in a particular enumerated space is not checked.
    pub fn apply_to(&self, spec: &ChartSpec) -> Result<ChartSpec, SpaceError> {
        use EditAction::*;
        let inapplicable = |why: &str| Err(SpaceError::Inapplicable(format!("{self}: {why}")));
        let mut next = spec.clone();
        match self {
            ChangeMark { mark } => {
                if spec.mark == *mark {
                    return inapplicable("mark unchanged");
                }
                next.mark = *mark;
            }
            AddField { channel, field } => {
                if spec.channels.contains_key(channel) {
                    return inapplicable("channel already encoded");
                }
                next.channels.insert(*channel, ChannelSpec::plain(field.clone()));
            }
            RemoveField { channel } => {
                if *channel == Channel::X {
                    return inapplicable("x channel is mandatory");
                }
                if next.channels.remove(channel).is_none() {
                    return inapplicable("channel not encoded");
                }
            }
            ModifyField { channel, field } => match next.channels.get_mut(channel) {
                Some(cs) if cs.field != *field => cs.field = field.clone(),
                Some(_) => return inapplicable("field unchanged"),
                None => return inapplicable("channel not encoded"),
            },
            AddFilter { predicate } => {
                if spec.filter {
                    return inapplicable("filter already present");
                }
                next.filter = true;
                next.predicate = *predicate;
            }
            RemoveFilter => {
                if !spec.filter {
                    return inapplicable("no filter to remove");
                }
                next.filter = false;
                next.predicate = None;
            }
            ModifyFilter { predicate } => {
                if !spec.filter || spec.predicate.is_none() {
                    return inapplicable("no filter predicate to modify");
                }
                if spec.predicate == Some(*predicate) {
                    return inapplicable("predicate unchanged");
                }
                next.predicate = Some(*predicate);
            }
            toggle => {
                let (t, channel, on) = toggle.transform_toggle().expect("transform toggle");
                match next.channels.get_mut(&channel) {
                    Some(cs) if cs.get(t) != on => cs.set(t, on),
                    Some(_) => return inapplicable("transform already in requested state"),
                    None => return inapplicable("channel not encoded"),
                }
            }
        }
        next.validate()
            .map_err(|e| SpaceError::Inapplicable(format!("{self}: {e}")))?;
        Ok(next)
    }

    fn sort_params(&self) -> (Option<Channel>, Option<Mark>, Option<&FieldRef>, Option<u8>) {
        use EditAction::*;
        match self {
            ChangeMark { mark } => (None, Some(*mark), None, None),
            AddField { channel, field } | ModifyField { channel, field } => (Some(*channel), None, Some(field), None),
            AddFilter { predicate } => (None, None, None, *predicate),
            ModifyFilter { predicate } => (None, None, None, Some(*predicate)),
            other => (other.channel(), None, None, None),
        }
    }
}

/// Canonical order: change-mark < add < remove < modify; within a group by
/// target (field, aggregate, bin, sort, filter), then channel
/// (x < y < color < size), then parameter.
impl Ord for EditAction {
    fn cmp(&self, other: &Self) -> Ordering {
        self.group_and_target()
            .cmp(&other.group_and_target())
            .then_with(|| self.sort_params().cmp(&other.sort_params()))
    }
}

impl PartialOrd for EditAction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EditAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use EditAction::*;
        match self {
            ChangeMark { mark } => write!(f, "change-mark({mark})"),
            AddField { channel, field } => write!(f, "add-field({channel}, {})", field.name),
            ModifyField { channel, field } => write!(f, "modify-field({channel}, {})", field.name),
            AddFilter { predicate: Some(p) } => write!(f, "add-filter({p})"),
            ModifyFilter { predicate } => write!(f, "modify-filter({predicate})"),
            other => f.write_str(&other.kind_key()),
        }
    }
}

/// Action features for an edge `source -> target` labeled `action`.
///
/// Plain edits yield `target - source`. Modify edits leave the state
/// features unchanged, so they are assigned the features of the matching
/// add edit instead (same channel, or the filter slot).
pub fn featurize_action(
    source: &StateFeatures,
    target: &StateFeatures,
    action: &EditAction,
) -> Result<ActionFeatures, SpaceError> {
    use EditAction::*;
    let diff = ActionFeatures::difference(source, target);
    let s = &source.0;
    let t = &target.0;
    let inconsistent = || Err(SpaceError::InconsistentAction(action.to_string()));
    // Slots that may differ between source and target.
    let expect_only = |slots: &[usize]| (0..diff.0.len()).all(|i| slots.contains(&i) || diff.0[i] == 0);

    match action {
        ChangeMark { mark } => {
            let to = mark_slot(*mark);
            if t[to] != 1 || s[to] != 0 || !expect_only(&[0, 1, 2]) {
                return inconsistent();
            }
            Ok(diff)
        }
        AddField { channel, .. } => {
            let slot = channel_slot(*channel);
            if s[slot] != 0 || t[slot] != 1 || !expect_only(&[slot]) {
                return inconsistent();
            }
            Ok(diff)
        }
        RemoveField { channel } => {
            let slot = channel_slot(*channel);
            let mut allowed = vec![slot];
            allowed.extend(Transform::ALL.iter().filter_map(|tr| transform_slot(*tr, *channel)));
            let flags_cleared = allowed[1..].iter().all(|&i| t[i] == 0);
            if s[slot] != 1 || t[slot] != 0 || !flags_cleared || !expect_only(&allowed) {
                return inconsistent();
            }
            Ok(diff)
        }
        ModifyField { channel, .. } => {
            let slot = channel_slot(*channel);
            if s != t || s[slot] != 1 {
                return inconsistent();
            }
            Ok(ActionFeatures::unit(slot, 1))
        }
        AddFilter { .. } | RemoveFilter => {
            let adding = matches!(action, AddFilter { .. });
            let (from, to) = if adding { (0, 1) } else { (1, 0) };
            if s[FILTER_SLOT] != from || t[FILTER_SLOT] != to || !expect_only(&[FILTER_SLOT]) {
                return inconsistent();
            }
            Ok(diff)
        }
        ModifyFilter { .. } => {
            if s != t || s[FILTER_SLOT] != 1 {
                return inconsistent();
            }
            Ok(ActionFeatures::unit(FILTER_SLOT, 1))
        }
        toggle => {
            let (tr, channel, on) = toggle.transform_toggle().expect("transform toggle");
            let Some(slot) = transform_slot(tr, channel) else {
                return inconsistent();
            };
            let (from, to) = if on { (0, 1) } else { (1, 0) };
            if s[slot] != from || t[slot] != to || !expect_only(&[slot]) {
                return inconsistent();
            }
            Ok(diff)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::{featurize_state, FieldKind};

    fn q(name: &str) -> FieldRef {
        FieldRef::new(name, FieldKind::Quantitative)
    }

    fn scatter() -> ChartSpec {
        ChartSpec::new(Mark::Point, ChannelSpec::plain(q("a"))).with_channel(Channel::Y, ChannelSpec::plain(q("b")))
    }

    fn features_of(a: &EditAction, spec: &ChartSpec) -> ActionFeatures {
        let next = a.apply_to(spec).unwrap();
        featurize_action(&featurize_state(spec).unwrap(), &featurize_state(&next).unwrap(), a).unwrap()
    }

    #[test]
    fn add_color_is_single_bit() {
        let a = EditAction::AddField { channel: Channel::Color, field: q("c") };
        assert_eq!(features_of(&a, &scatter()), ActionFeatures::unit(5, 1));
    }

    #[test]
    fn change_mark_swaps_one_hot() {
        let bar = ChartSpec::new(Mark::Bar, ChannelSpec::plain(q("a")));
        let a = EditAction::ChangeMark { mark: Mark::Point };
        let mut expected = [0i8; 14];
        expected[0] = -1;
        expected[2] = 1;
        assert_eq!(features_of(&a, &bar), ActionFeatures(expected));
    }

    #[test]
    fn modify_field_matches_add_field() {
        let spec = scatter();
        let modify = EditAction::ModifyField { channel: Channel::X, field: q("z") };
        let f = features_of(&modify, &spec);
        assert_eq!(f, ActionFeatures::unit(3, 1));
        let raw = ActionFeatures::difference(
            &featurize_state(&spec).unwrap(),
            &featurize_state(&modify.apply_to(&spec).unwrap()).unwrap(),
        );
        assert_eq!(raw, ActionFeatures::ZERO);

        let filtered = spec.clone().with_filter();
        let mut with_pred = filtered.clone();
        with_pred.predicate = Some(0);
        let mf = EditAction::ModifyFilter { predicate: 1 };
        assert_eq!(features_of(&mf, &with_pred), ActionFeatures::unit(13, 1));
        let add = EditAction::AddFilter { predicate: None };
        assert_eq!(features_of(&add, &spec), ActionFeatures::unit(13, 1));
    }

    #[test]
    fn removing_field_clears_its_flags() {
        let spec = ChartSpec::new(Mark::Bar, ChannelSpec::plain(FieldRef::new("n", FieldKind::Nominal)))
            .with_channel(Channel::Y, ChannelSpec::plain(q("v")).with(Transform::Aggregate).with(Transform::Sort));
        let f = features_of(&EditAction::RemoveField { channel: Channel::Y }, &spec);
        let mut expected = [0i8; 14];
        expected[4] = -1;
        expected[8] = -1;
        expected[12] = -1;
        assert_eq!(f.0, expected);
    }

    #[test]
    fn inconsistent_kind_is_rejected() {
        let spec = scatter();
        let s = featurize_state(&spec).unwrap();
        let colored = EditAction::AddField { channel: Channel::Color, field: q("c") }.apply_to(&spec).unwrap();
        let t = featurize_state(&colored).unwrap();
        let wrong = EditAction::AddField { channel: Channel::Size, field: q("c") };
        assert!(matches!(featurize_action(&s, &t, &wrong), Err(SpaceError::InconsistentAction(_))));
        assert!(featurize_action(&s, &t, &EditAction::ChangeMark { mark: Mark::Bar }).is_err());
        assert!(featurize_action(&s, &s, &EditAction::ModifyFilter { predicate: 0 }).is_err());
    }

    #[test]
    fn inapplicable_edits() {
        let spec = scatter();
        assert!(EditAction::RemoveField { channel: Channel::X }.apply_to(&spec).is_err());
        assert!(EditAction::RemoveFilter.apply_to(&spec).is_err());
        assert!(EditAction::ChangeMark { mark: Mark::Point }.apply_to(&spec).is_err());
        // aggregate on a nominal field violates field-kind compatibility
        let bar = ChartSpec::new(Mark::Bar, ChannelSpec::plain(FieldRef::new("n", FieldKind::Nominal)));
        assert!(EditAction::AddAggregate { channel: Channel::X }.apply_to(&bar).is_err());
        assert!(EditAction::AddSort { channel: Channel::Color }.apply_to(&bar).is_err());
    }

    #[test]
    fn canonical_order() {
        let mut actions = vec![
            EditAction::ModifyFilter { predicate: 0 },
            EditAction::RemoveField { channel: Channel::Y },
            EditAction::AddSort { channel: Channel::X },
            EditAction::AddField { channel: Channel::Color, field: q("c") },
            EditAction::AddField { channel: Channel::Y, field: q("b") },
            EditAction::ChangeMark { mark: Mark::Line },
            EditAction::AddFilter { predicate: None },
        ];
        actions.sort();
        let keys: Vec<String> = actions.iter().map(|a| a.kind_key()).collect();
        assert_eq!(
            keys,
            ["change-mark", "add-field-y", "add-field-color", "add-sort-x", "add-filter", "remove-field-y", "modify-filter"]
        );
    }

    #[test]
    fn json_shape() {
        let a = EditAction::AddField { channel: Channel::Color, field: FieldRef::new("Origin", FieldKind::Nominal) };
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            r#"{"kind":"add-field","channel":"color","field":{"name":"Origin","kind":"nominal"}}"#
        );
        let parsed: EditAction = serde_json::from_str(r#"{"kind":"remove-filter"}"#).unwrap();
        assert_eq!(parsed, EditAction::RemoveFilter);
        assert_eq!(EditAction::AddBin { channel: Channel::Y }.kind_key(), "add-bin-y");
    }
}
