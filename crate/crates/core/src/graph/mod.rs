//! The mirrored profile graph.
//!
//! Nodes are constructs keyed by `(layer, kind, label)`, edges carry one of
//! four typed relations with a weight in `[0, 1]`, and every node holds an
//! ordered list of scored evidence. Confidence in a node is the noisy-OR of
//! its evidence contributions, each discounted by age on the graph clock.
//!
//! The graph never reads the wall clock. Its clock only moves when a caller
//! advances it, which keeps replay and tests deterministic.

mod canonical;
mod confidence;
mod segments;
mod writer;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Timestamp;

pub use canonical::{CanonicalSnapshot, EMPTY_SNAPSHOT_HASH};
pub use confidence::{contribution, noisy_or, DEFAULT_DECAY_PER_DAY};
pub use segments::Segment;
pub use writer::{GraphWriter, Snapshot};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("invalid layer `{0}`")]
    InvalidLayer(String),
    #[error("invalid node kind `{0}`")]
    InvalidKind(String),
    #[error("invalid relation `{0}`")]
    InvalidRelation(String),
    #[error("node label must not be empty")]
    EmptyLabel,
    #[error("node {0} does not exist")]
    MissingNode(NodeId),
    #[error("evidence {0} does not exist")]
    MissingEvidence(EvidenceId),
    #[error("edge weight {0} is outside [0, 1]")]
    InvalidWeight(f64),
    #[error("{field} = {value} is outside [0, 1]")]
    InvalidScore { field: &'static str, value: f64 },
    #[error("evidence observed at {observed} is ahead of the graph clock ({clock:?})")]
    FutureTimestamp {
        observed: Timestamp,
        clock: Option<Timestamp>,
    },
    #[error("referential integrity violated: edge {edge} points at missing node {node}")]
    DanglingEdge { edge: EdgeId, node: NodeId },
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(NodeId, "n");
id_type!(EdgeId, "e");
id_type!(EvidenceId, "ev");

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident, $err:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = GraphError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(GraphError::$err(other.to_string())),
                }
            }
        }
    };
}

string_enum!(
    /// The seven subgraphs of a mirrored profile.
    Layer, InvalidLayer {
        Cognition => "cognition",
        Affect => "affect",
        Habits => "habits",
        Values => "values",
        Social => "social",
        Health => "health",
        Objectives => "objectives",
    }
);

string_enum!(
    NodeKind, InvalidKind {
        Belief => "belief",
        Routine => "routine",
        Trigger => "trigger",
        ProtectiveFactor => "protective_factor",
        Value => "value",
        Skill => "skill",
        Construct => "construct",
    }
);

string_enum!(
    Relation, InvalidRelation {
        Causation => "causation",
        Amplification => "amplification",
        Buffering => "buffering",
        Contradiction => "contradiction",
    }
);

/// Whether a piece of evidence backs or disputes the construct it is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Supports,
    Contradicts,
}

/// Natural key of a node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub layer: Layer,
    pub kind: NodeKind,
    pub label: String,
}

impl NodeKey {
    pub fn new(layer: Layer, kind: NodeKind, label: impl Into<String>) -> Self {
        Self {
            layer,
            kind,
            label: label.into(),
        }
    }

    /// Build a key from its textual parts, rejecting unknown layers or kinds.
    pub fn parse(layer: &str, kind: &str, label: &str) -> Result<Self> {
        Ok(Self::new(layer.parse()?, kind.parse()?, label))
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.layer, self.kind, self.label)
    }
}

/// Label prefix marking a construct as being about a specific candidate,
/// e.g. `trust_breach:candidate_G`.
pub const CANDIDATE_TAG: &str = ":candidate_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub layer: Layer,
    pub kind: NodeKind,
    pub label: String,
    pub evidence: Vec<EvidenceRecord>,
}

impl GraphNode {
    pub fn key(&self) -> NodeKey {
        NodeKey::new(self.layer, self.kind, self.label.clone())
    }

    /// Candidate id (`candidate_X`) this construct is tagged to, if any.
    pub fn subject(&self) -> Option<&str> {
        let at = self.label.rfind(CANDIDATE_TAG)?;
        let subject = &self.label[at + 1..];
        (subject.len() > CANDIDATE_TAG.len() - 1).then_some(subject)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub relation: Relation,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub id: EvidenceId,
    pub source: String,
    pub observed_at: Timestamp,
    pub reliability: f64,
    pub uncertainty: f64,
    pub payload: String,
    pub weight_multiplier: f64,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_tag: Option<String>,
}

/// Evidence as supplied by a caller, before the graph assigns it an id.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEvidence {
    pub source: String,
    pub observed_at: Timestamp,
    pub reliability: f64,
    pub uncertainty: f64,
    pub payload: String,
    pub polarity: Polarity,
    pub episode_tag: Option<String>,
}

impl NewEvidence {
    pub fn new(source: impl Into<String>, observed_at: Timestamp, reliability: f64, uncertainty: f64) -> Self {
        Self {
            source: source.into(),
            observed_at,
            reliability,
            uncertainty,
            payload: String::new(),
            polarity: Polarity::Supports,
            episode_tag: None,
        }
    }

    pub fn payload(mut self, payload: impl Into<String>) -> Self {
        self.payload = payload.into();
        self
    }

    pub fn polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn episode_tag(mut self, tag: impl Into<String>) -> Self {
        self.episode_tag = Some(tag.into());
        self
    }
}

fn check_unit(field: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(GraphError::InvalidScore { field, value })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorGraph {
    owner_persona: String,
    nodes: BTreeMap<NodeId, GraphNode>,
    edges: BTreeMap<EdgeId, GraphEdge>,
    segments: Vec<Segment>,
    version: u64,
    clock: Option<Timestamp>,
    decay_per_day: f64,
    next_node: u64,
    next_edge: u64,
    next_evidence: u64,
    by_key: BTreeMap<NodeKey, NodeId>,
    by_triple: BTreeMap<(NodeId, NodeId, Relation), EdgeId>,
}

impl Default for MirrorGraph {
    fn default() -> Self {
        Self::new("persona")
    }
}

impl MirrorGraph {
    pub fn new(owner_persona: impl Into<String>) -> Self {
        Self {
            owner_persona: owner_persona.into(),
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            segments: Vec::new(),
            version: 0,
            clock: None,
            decay_per_day: DEFAULT_DECAY_PER_DAY,
            next_node: 0,
            next_edge: 0,
            next_evidence: 0,
            by_key: BTreeMap::new(),
            by_triple: BTreeMap::new(),
        }
    }

    /// Override the per-day exponential decay rate used by [`Self::effective_confidence`].
    pub fn with_decay_per_day(mut self, lambda: f64) -> Self {
        assert!(lambda.is_finite() && lambda >= 0.0, "decay rate must be finite and nonnegative");
        self.decay_per_day = lambda;
        self
    }

    pub fn owner_persona(&self) -> &str {
        &self.owner_persona
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn clock(&self) -> Option<Timestamp> {
        self.clock
    }

    pub fn decay_per_day(&self) -> f64 {
        self.decay_per_day
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&GraphNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &GraphEdge> {
        self.edges.values()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn find(&self, key: &NodeKey) -> Option<NodeId> {
        self.by_key.get(key).copied()
    }

    pub fn edge_between(&self, from: NodeId, to: NodeId, relation: Relation) -> Option<&GraphEdge> {
        self.by_triple
            .get(&(from, to, relation))
            .and_then(|id| self.edges.get(id))
    }

    /// Edges leaving `id`.
    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &GraphEdge> {
        self.by_triple
            .range((id, NodeId(0), Relation::Causation)..=(id, NodeId(u64::MAX), Relation::Contradiction))
            .filter_map(|(_, edge)| self.edges.get(edge))
    }

    pub fn evidence(&self, id: EvidenceId) -> Option<(&GraphNode, &EvidenceRecord)> {
        self.nodes
            .values()
            .find_map(|node| node.evidence.iter().find(|ev| ev.id == id).map(|ev| (node, ev)))
    }

    fn bump(&mut self) {
        self.version += 1;
    }

    fn require(&self, id: NodeId) -> Result<&GraphNode> {
        self.nodes.get(&id).ok_or(GraphError::MissingNode(id))
    }

    /// Insert the node for `key`, or return the existing one.
    ///
    /// The version only moves when a node is actually created.
    pub fn upsert_node(&mut self, key: &NodeKey) -> Result<NodeId> {
        if key.label.trim().is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        if let Some(id) = self.find(key) {
            return Ok(id);
        }
        let id = NodeId(self.next_node);
        self.next_node += 1;
        self.nodes.insert(
            id,
            GraphNode {
                id,
                layer: key.layer,
                kind: key.kind,
                label: key.label.clone(),
                evidence: Vec::new(),
            },
        );
        self.by_key.insert(key.clone(), id);
        self.bump();
        Ok(id)
    }

    /// Add a typed edge. A second edge with the same `(from, to, relation)`
    /// replaces the weight of the first.
    pub fn add_edge(&mut self, from: NodeId, to: NodeId, relation: Relation, weight: f64) -> Result<EdgeId> {
        self.require(from)?;
        self.require(to)?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(GraphError::InvalidWeight(weight));
        }
        if let Some(&id) = self.by_triple.get(&(from, to, relation)) {
            let edge = self.edges.get_mut(&id).expect("triple index is consistent");
            if edge.weight != weight {
                edge.weight = weight;
                self.bump();
            }
            return Ok(id);
        }
        let id = EdgeId(self.next_edge);
        self.next_edge += 1;
        self.edges.insert(
            id,
            GraphEdge {
                id,
                from,
                to,
                relation,
                weight,
            },
        );
        self.by_triple.insert((from, to, relation), id);
        self.bump();
        Ok(id)
    }

    /// Move the graph clock forward. Earlier instants are ignored.
    pub fn advance_clock(&mut self, to: Timestamp) {
        if self.clock.is_none_or(|clock| to > clock) {
            self.clock = Some(to);
            self.bump();
        }
    }

    pub fn attach_evidence(&mut self, node: NodeId, evidence: NewEvidence) -> Result<EvidenceId> {
        self.require(node)?;
        check_unit("reliability", evidence.reliability)?;
        check_unit("uncertainty", evidence.uncertainty)?;
        if self.clock.is_none_or(|clock| evidence.observed_at > clock) {
            return Err(GraphError::FutureTimestamp {
                observed: evidence.observed_at,
                clock: self.clock,
            });
        }
        let id = EvidenceId(self.next_evidence);
        self.next_evidence += 1;
        let record = EvidenceRecord {
            id,
            source: evidence.source,
            observed_at: evidence.observed_at,
            reliability: evidence.reliability,
            uncertainty: evidence.uncertainty,
            payload: evidence.payload,
            weight_multiplier: 1.0,
            polarity: evidence.polarity,
            episode_tag: evidence.episode_tag,
        };
        let list = &mut self.nodes.get_mut(&node).expect("checked above").evidence;
        let at = list.partition_point(|ev| ev.observed_at <= record.observed_at);
        list.insert(at, record);
        self.bump();
        Ok(id)
    }

    fn evidence_mut(&mut self, id: EvidenceId) -> Result<&mut EvidenceRecord> {
        self.nodes
            .values_mut()
            .find_map(|node| node.evidence.iter_mut().find(|ev| ev.id == id))
            .ok_or(GraphError::MissingEvidence(id))
    }

    /// Multiply an evidence record's weight multiplier by `factor`.
    pub fn scale_evidence_weight(&mut self, id: EvidenceId, factor: f64) -> Result<f64> {
        check_unit("factor", factor)?;
        let record = self.evidence_mut(id)?;
        let updated = record.weight_multiplier * factor;
        let changed = updated != record.weight_multiplier;
        record.weight_multiplier = updated;
        if changed {
            self.bump();
        }
        Ok(updated)
    }

    /// Add `delta` to the uncertainty of every evidence record on `node`, saturating at 1.
    pub fn raise_uncertainty(&mut self, node: NodeId, delta: f64) -> Result<()> {
        check_unit("delta", delta)?;
        let target = self.nodes.get_mut(&node).ok_or(GraphError::MissingNode(node))?;
        let mut changed = false;
        for ev in &mut target.evidence {
            let raised = (ev.uncertainty + delta).min(1.0);
            changed |= raised != ev.uncertainty;
            ev.uncertainty = raised;
        }
        if changed {
            self.bump();
        }
        Ok(())
    }

    /// Remove an evidence record, returning it.
    pub fn retract_evidence(&mut self, id: EvidenceId) -> Result<EvidenceRecord> {
        for node in self.nodes.values_mut() {
            if let Some(pos) = node.evidence.iter().position(|ev| ev.id == id) {
                let removed = node.evidence.remove(pos);
                self.version += 1;
                return Ok(removed);
            }
        }
        Err(GraphError::MissingEvidence(id))
    }

    /// Contribution of one evidence record as of `as_of`.
    pub fn contribution_of(&self, evidence: &EvidenceRecord, as_of: Timestamp) -> f64 {
        contribution(evidence, as_of, self.decay_per_day)
    }

    /// Noisy-OR of all evidence contributions on `node` as of `as_of`.
    pub fn effective_confidence(&self, node: NodeId, as_of: Timestamp) -> Result<f64> {
        let node = self.require(node)?;
        Ok(noisy_or(
            node.evidence.iter().map(|ev| self.contribution_of(ev, as_of)),
        ))
    }

    /// Nodes within `depth` hops of `node`, walking edges in either direction.
    ///
    /// Depth 0 yields the node itself; any positive depth yields the reached
    /// neighbours without the origin.
    pub fn neighborhood(&self, node: NodeId, relation: Option<Relation>, depth: usize) -> Result<BTreeSet<NodeId>> {
        self.require(node)?;
        if depth == 0 {
            return Ok(BTreeSet::from([node]));
        }
        let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for edge in self.edges.values() {
            if relation.is_some_and(|r| r != edge.relation) {
                continue;
            }
            adjacency.entry(edge.from).or_default().push(edge.to);
            adjacency.entry(edge.to).or_default().push(edge.from);
        }
        let mut seen = BTreeSet::from([node]);
        let mut queue = VecDeque::from([(node, 0usize)]);
        while let Some((current, hops)) = queue.pop_front() {
            if hops == depth {
                continue;
            }
            for &next in adjacency.get(&current).into_iter().flatten() {
                if seen.insert(next) {
                    queue.push_back((next, hops + 1));
                }
            }
        }
        seen.remove(&node);
        Ok(seen)
    }

    /// Recompute and store higher-order segments. Returns whether they changed.
    pub fn refresh_segments(&mut self, min_support: usize) -> bool {
        let segments = self.aggregate_segments(min_support);
        if segments == self.segments {
            return false;
        }
        self.segments = segments;
        self.bump();
        true
    }

    /// Every edge endpoint resolves and every natural key is unique.
    pub fn check_integrity(&self) -> Result<()> {
        for edge in self.edges.values() {
            for node in [edge.from, edge.to] {
                if !self.nodes.contains_key(&node) {
                    return Err(GraphError::DanglingEdge { edge: edge.id, node });
                }
            }
        }
        debug_assert_eq!(self.by_key.len(), self.nodes.len());
        Ok(())
    }
}
