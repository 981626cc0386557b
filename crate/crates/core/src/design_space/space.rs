use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{featurize_state, ActionFeatures, StateFeatures};
use super::graph::{FeatureGraph, Transition};
use super::{featurize_action, Channel, ChannelSpec, ChartSpec, EditAction, FieldKind, FieldRef, Mark, SpaceError, Transform};

/// Knobs bounding the enumerated space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerationConfig {
    pub marks: Vec<Mark>,
    /// Encoding channels in use. `x` must be listed.
    pub channels: Vec<Channel>,
    /// Positional channels on which each transform may be toggled.
    pub aggregate: Vec<Channel>,
    pub bin: Vec<Channel>,
    pub sort: Vec<Channel>,
    pub filter: bool,
    /// Number of distinguishable filter predicates. `1` models the filter
    /// as a plain flag; larger values add modify-filter edges.
    pub filter_predicates: u8,
    /// Use at most this many schema fields of a kind (schema order).
    pub max_fields_per_kind: BTreeMap<FieldKind, usize>,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        Self {
            marks: Mark::ALL.to_vec(),
            channels: Channel::ALL.to_vec(),
            aggregate: vec![Channel::X, Channel::Y],
            bin: vec![Channel::X, Channel::Y],
            sort: vec![Channel::X, Channel::Y],
            filter: true,
            filter_predicates: 1,
            max_fields_per_kind: BTreeMap::new(),
        }
    }
}

impl EnumerationConfig {
    /// Only the x channel, no transforms, no filter.
    pub fn x_only() -> Self {
        Self {
            channels: vec![Channel::X],
            aggregate: vec![],
            bin: vec![],
            sort: vec![],
            filter: false,
            ..Self::default()
        }
    }

    fn allowed(&self, transform: Transform) -> &[Channel] {
        match transform {
            Transform::Aggregate => &self.aggregate,
            Transform::Bin => &self.bin,
            Transform::Sort => &self.sort,
        }
    }

    fn validate(&self) -> Result<(), SpaceError> {
        let bad = |m: String| Err(SpaceError::InvalidConfig(m));
        if self.marks.is_empty() {
            return bad("no marks enabled".into());
        }
        if !self.channels.contains(&Channel::X) {
            return bad("channel x must be enabled".into());
        }
        for t in Transform::ALL {
            for c in self.allowed(t) {
                if !c.is_positional() {
                    return bad(format!("{t} is only allowed on x and y, not {c}"));
                }
            }
        }
        if self.filter_predicates == 0 {
            return bad("filter_predicates must be at least 1".into());
        }
        Ok(())
    }

    fn predicate_variants(&self) -> Vec<Option<u8>> {
        if self.filter_predicates <= 1 {
            vec![None]
        } else {
            (0..self.filter_predicates).map(Some).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceCounts {
    pub states: usize,
    pub edges: usize,
}

/// The enumerated chart design space. Immutable once built.
#[derive(Debug, Clone)]
pub struct DesignSpace {
    schema: Vec<FieldRef>,
    config: EnumerationConfig,
    specs: Vec<ChartSpec>,
    graph: FeatureGraph,
    index: HashMap<ChartSpec, usize>,
    fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    spec: ChartSpec,
    features: StateFeatures,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    source: usize,
    action: EditAction,
    target: usize,
    features: ActionFeatures,
}

#[derive(Serialize, Deserialize)]
struct SpaceFile {
    schema: Vec<FieldRef>,
    config: EnumerationConfig,
    states: Vec<StateRecord>,
    edges: Vec<EdgeRecord>,
}

fn validate_schema(schema: &[FieldRef]) -> Result<(), SpaceError> {
    if schema.is_empty() {
        return Err(SpaceError::EmptySchema);
    }
    let mut names = HashSet::new();
    for f in schema {
        if f.name.is_empty() {
            return Err(SpaceError::InvalidSchema("field name is empty".into()));
        }
        if !names.insert(f.name.as_str()) {
            return Err(SpaceError::InvalidSchema(format!("duplicate field name {:?}", f.name)));
        }
    }
    Ok(())
}

fn used_fields(schema: &[FieldRef], config: &EnumerationConfig) -> Vec<FieldRef> {
    let mut taken: BTreeMap<FieldKind, usize> = BTreeMap::new();
    schema
        .iter()
        .filter(|f| {
            let n = taken.entry(f.kind).or_default();
            *n += 1;
            config.max_fields_per_kind.get(&f.kind).is_none_or(|&cap| *n <= cap)
        })
        .cloned()
        .collect()
}

/// All encodings a channel can take: every field with every allowed
/// transform combination.
fn channel_options(channel: Channel, fields: &[FieldRef], config: &EnumerationConfig) -> Vec<ChannelSpec> {
    let transforms: Vec<Transform> = Transform::ALL
        .into_iter()
        .filter(|t| config.allowed(*t).contains(&channel))
        .collect();
    let mut out = Vec::new();
    for field in fields {
        for mask in 0u32..(1 << transforms.len()) {
            let mut cs = ChannelSpec::plain(field.clone());
            for (bit, t) in transforms.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    cs.set(*t, true);
                }
            }
            let ok = (!cs.aggregate || field.kind.can_aggregate()) && (!cs.bin || field.kind.can_bin());
            if ok {
                out.push(cs);
            }
        }
    }
    out
}

/// Every edit that could be tried from `spec` under `config`; results
/// outside the space are filtered by the caller.
fn candidate_actions(spec: &ChartSpec, fields: &[FieldRef], config: &EnumerationConfig) -> Vec<EditAction> {
    let mut out = Vec::new();
    for &mark in &config.marks {
        if mark != spec.mark {
            out.push(EditAction::ChangeMark { mark });
        }
    }
    for &channel in &config.channels {
        match spec.channel(channel) {
            None => {
                out.extend(fields.iter().map(|f| EditAction::AddField { channel, field: f.clone() }));
            }
            Some(cs) => {
                out.push(EditAction::RemoveField { channel });
                out.extend(
                    fields
                        .iter()
                        .filter(|f| **f != cs.field)
                        .map(|f| EditAction::ModifyField { channel, field: f.clone() }),
                );
                for t in Transform::ALL {
                    if config.allowed(t).contains(&channel) {
                        out.push(if cs.get(t) {
                            EditAction::remove_transform(t, channel)
                        } else {
                            EditAction::add_transform(t, channel)
                        });
                    }
                }
            }
        }
    }
    if config.filter {
        if spec.filter {
            out.push(EditAction::RemoveFilter);
            for p in config.predicate_variants().into_iter().flatten() {
                out.push(EditAction::ModifyFilter { predicate: p });
            }
        } else {
            for predicate in config.predicate_variants() {
                out.push(EditAction::AddFilter { predicate });
            }
        }
    }
    out
}

/// Enumerates every valid chart under `config` and connects them with
/// every applicable edit. Output is a pure function of the inputs.
pub fn enumerate_space(schema: &[FieldRef], config: &EnumerationConfig) -> Result<DesignSpace, SpaceError> {
    validate_schema(schema)?;
    config.validate()?;
    let fields = used_fields(schema, config);

    let mut encodings: Vec<(Channel, Vec<Option<ChannelSpec>>)> = Vec::new();
    let mut channels = config.channels.clone();
    channels.sort();
    channels.dedup();
    for channel in channels {
        let mut opts: Vec<Option<ChannelSpec>> = Vec::new();
        if channel != Channel::X {
            opts.push(None);
        }
        opts.extend(channel_options(channel, &fields, config).into_iter().map(Some));
        encodings.push((channel, opts));
    }
    let filters: Vec<(bool, Option<u8>)> = if config.filter {
        std::iter::once((false, None))
            .chain(config.predicate_variants().into_iter().map(|p| (true, p)))
            .collect()
    } else {
        vec![(false, None)]
    };

    let mut specs = Vec::new();
    let mut marks = config.marks.clone();
    marks.sort();
    marks.dedup();
    let mut choice = vec![0usize; encodings.len()];
    if encodings.iter().all(|(_, o)| !o.is_empty()) {
        loop {
            for &mark in &marks {
                for &(filter, predicate) in &filters {
                    let mut channels = BTreeMap::new();
                    for (k, (channel, opts)) in encodings.iter().enumerate() {
                        if let Some(cs) = &opts[choice[k]] {
                            channels.insert(*channel, cs.clone());
                        }
                    }
                    let spec = ChartSpec { mark, channels, filter, predicate };
                    if spec.validate().is_ok() {
                        specs.push(spec);
                    }
                }
            }
            // odometer over channel options
            let mut k = 0;
            loop {
                if k == choice.len() {
                    break;
                }
                choice[k] += 1;
                if choice[k] < encodings[k].1.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
    }
    if specs.is_empty() {
        return Err(SpaceError::EmptySpace);
    }
    specs.sort();
    specs.dedup();
    let index: HashMap<ChartSpec, usize> = specs.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let features = specs.iter().map(featurize_state).collect::<Result<Vec<_>, _>>()?;

    let mut edges = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let mut out = Vec::new();
        for action in candidate_actions(spec, &fields, config) {
            let Ok(next) = action.apply_to(spec) else { continue };
            let Some(&target) = index.get(&next) else { continue };
            let f = featurize_action(&features[i], &features[target], &action)?;
            out.push(Transition { action, target, features: f });
        }
        out.sort_by(|a, b| a.action.cmp(&b.action));
        edges.push(out);
    }
    let graph = FeatureGraph::new(features, edges)?;
    Ok(DesignSpace::assemble(schema.to_vec(), config.clone(), specs, graph, index))
}

impl DesignSpace {
    fn assemble(
        schema: Vec<FieldRef>,
        config: EnumerationConfig,
        specs: Vec<ChartSpec>,
        graph: FeatureGraph,
        index: HashMap<ChartSpec, usize>,
    ) -> Self {
        let mut space = DesignSpace { schema, config, specs, graph, index, fingerprint: String::new() };
        let compact = serde_json::to_vec(&space.to_file()).expect("space serializes");
        space.fingerprint = hex::encode(Sha256::digest(compact));
        space
    }

    pub fn schema(&self) -> &[FieldRef] {
        &self.schema
    }

    pub fn config(&self) -> &EnumerationConfig {
        &self.config
    }

    pub fn graph(&self) -> &FeatureGraph {
        &self.graph
    }

    pub fn counts(&self) -> SpaceCounts {
        SpaceCounts { states: self.specs.len(), edges: self.graph.num_edges() }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// SHA-256 over the compact serialized space.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn spec(&self, state: usize) -> Result<&ChartSpec, SpaceError> {
        self.specs
            .get(state)
            .ok_or(SpaceError::StateOutOfRange { index: state, len: self.specs.len() })
    }

    pub fn specs(&self) -> &[ChartSpec] {
        &self.specs
    }

    pub fn state_index(&self, spec: &ChartSpec) -> Result<usize, SpaceError> {
        self.index.get(spec).copied().ok_or(SpaceError::UnknownState)
    }

    pub fn features(&self, state: usize) -> Result<&StateFeatures, SpaceError> {
        self.spec(state)?;
        Ok(self.graph.state_features(state))
    }

    pub fn neighbors(&self, state: usize) -> Result<&[Transition], SpaceError> {
        self.graph.neighbors(state)
    }

    pub fn apply_action(&self, state: usize, action: &EditAction) -> Result<usize, SpaceError> {
        self.graph.apply(state, action)
    }

    fn to_file(&self) -> SpaceFile {
        SpaceFile {
            schema: self.schema.clone(),
            config: self.config.clone(),
            states: self
                .specs
                .iter()
                .zip(self.graph.all_state_features())
                .map(|(spec, f)| StateRecord { spec: spec.clone(), features: *f })
                .collect(),
            edges: (0..self.specs.len())
                .flat_map(|s| {
                    self.graph.out_edges(s).iter().map(move |t| EdgeRecord {
                        source: s,
                        action: t.action.clone(),
                        target: t.target,
                        features: t.features,
                    })
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("space serializes");
        s.push('\n');
        s
    }

    /// Loads a serialized space and re-checks every stored feature vector
    /// and edge against the chart specs.
    pub fn from_json(bytes: &[u8]) -> Result<Self, SpaceError> {
        let file: SpaceFile = serde_json::from_slice(bytes)?;
        validate_schema(&file.schema)?;
        let mut specs = Vec::with_capacity(file.states.len());
        let mut features = Vec::with_capacity(file.states.len());
        for (i, rec) in file.states.into_iter().enumerate() {
            let f = featurize_state(&rec.spec)?;
            if f != rec.features {
                return Err(SpaceError::Malformed(format!("state {i}: stored features disagree with spec")));
            }
            specs.push(rec.spec);
            features.push(f);
        }
        let index: HashMap<ChartSpec, usize> = specs.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        if index.len() != specs.len() {
            return Err(SpaceError::Malformed("duplicate states".into()));
        }
        let mut edges: Vec<Vec<Transition>> = vec![Vec::new(); specs.len()];
        for e in file.edges {
            if e.source >= specs.len() || e.target >= specs.len() {
                return Err(SpaceError::Malformed(format!("edge {} -> {} out of range", e.source, e.target)));
            }
            let next = e.action.apply_to(&specs[e.source])?;
            if next != specs[e.target] {
                return Err(SpaceError::Malformed(format!(
                    "edge {} -[{}]-> {} does not match its action",
                    e.source, e.action, e.target
                )));
            }
            let f = featurize_action(&features[e.source], &features[e.target], &e.action)?;
            if f != e.features {
                return Err(SpaceError::Malformed(format!("edge {} -[{}]: stored features disagree", e.source, e.action)));
            }
            edges[e.source].push(Transition { action: e.action, target: e.target, features: f });
        }
        for out in &mut edges {
            out.sort_by(|a, b| a.action.cmp(&b.action));
        }
        let graph = FeatureGraph::new(features, edges)?;
        Ok(Self::assemble(file.schema, file.config, specs, graph, index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::FieldKind;

    fn quant(name: &str) -> FieldRef {
        FieldRef::new(name, FieldKind::Quantitative)
    }

    #[test]
    fn mark_only_space() {
        let space = enumerate_space(&[quant("v")], &EnumerationConfig::x_only()).unwrap();
        assert_eq!(space.counts(), SpaceCounts { states: 3, edges: 6 });
        for s in 0..3 {
            let n = space.neighbors(s).unwrap();
            assert_eq!(n.len(), 2);
            assert!(n.iter().all(|t| matches!(t.action, EditAction::ChangeMark { .. })));
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(enumerate_space(&[], &EnumerationConfig::default()), Err(SpaceError::EmptySchema)));
        let no_x = EnumerationConfig { channels: vec![Channel::Y], ..EnumerationConfig::default() };
        assert!(matches!(enumerate_space(&[quant("v")], &no_x), Err(SpaceError::InvalidConfig(_))));
        let capped = EnumerationConfig {
            max_fields_per_kind: [(FieldKind::Quantitative, 0)].into_iter().collect(),
            ..EnumerationConfig::x_only()
        };
        assert!(matches!(enumerate_space(&[quant("v")], &capped), Err(SpaceError::EmptySpace)));
        let dup = [quant("v"), quant("v")];
        assert!(matches!(enumerate_space(&dup, &EnumerationConfig::default()), Err(SpaceError::InvalidSchema(_))));
    }

    #[test]
    fn neighbors_out_of_range() {
        let space = enumerate_space(&[quant("v")], &EnumerationConfig::x_only()).unwrap();
        assert!(matches!(space.neighbors(3), Err(SpaceError::StateOutOfRange { index: 3, len: 3 })));
    }

    #[test]
    fn filter_round_trip_and_inapplicable() {
        let config = EnumerationConfig { filter: true, ..EnumerationConfig::x_only() };
        let space = enumerate_space(&[quant("v")], &config).unwrap();
        let start = space.state_index(&ChartSpec::new(Mark::Bar, ChannelSpec::plain(quant("v")))).unwrap();
        let filtered = space.apply_action(start, &EditAction::AddFilter { predicate: None }).unwrap();
        assert_ne!(filtered, start);
        assert_eq!(space.apply_action(filtered, &EditAction::RemoveFilter).unwrap(), start);
        assert!(matches!(space.apply_action(start, &EditAction::RemoveFilter), Err(SpaceError::Inapplicable(_))));
    }

    #[test]
    fn predicate_variants_add_modify_edges() {
        let config = EnumerationConfig { filter: true, filter_predicates: 3, ..EnumerationConfig::x_only() };
        let space = enumerate_space(&[quant("v")], &config).unwrap();
        // 3 marks x (unfiltered + 3 predicates)
        assert_eq!(space.len(), 12);
        let filtered = space
            .specs()
            .iter()
            .position(|s| s.predicate == Some(1))
            .unwrap();
        let kinds: Vec<String> = space.neighbors(filtered).unwrap().iter().map(|t| t.action.kind_key()).collect();
        assert_eq!(kinds.iter().filter(|k| *k == "modify-filter").count(), 2);
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let schema = [quant("a"), FieldRef::new("b", FieldKind::Nominal)];
        let config = EnumerationConfig { channels: vec![Channel::X, Channel::Y], ..EnumerationConfig::default() };
        let space = enumerate_space(&schema, &config).unwrap();
        let json = space.to_json();
        let back = DesignSpace::from_json(json.as_bytes()).unwrap();
        assert_eq!(back.to_json(), json);
        assert_eq!(back.fingerprint(), space.fingerprint());
    }

    #[test]
    fn tampered_space_is_rejected() {
        let space = enumerate_space(&[quant("v")], &EnumerationConfig::x_only()).unwrap();
        let json = space.to_json().replacen("\"target\": 1", "\"target\": 0", 1);
        assert!(DesignSpace::from_json(json.as_bytes()).is_err());
    }
}
