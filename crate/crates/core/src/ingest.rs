//! Loading hiring inputs and anchoring context events into the graph.
//!
//! All documents are JSON. A framework is one object, profiles and context
//! events are line-delimited (one object per line, blank lines ignored).
//!
//! Transcripts arrive pre-structured: every event carries one assertion about
//! a node, identified by natural key. Assertions become evidence on that node.
//! An assertion may also name a counterpart node; a contradicting assertion
//! then ensures a `contradiction` edge from its target to the counterpart, a
//! supporting one an `amplification` edge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, Layer, MirrorGraph, NewEvidence, NodeKey, Polarity, Relation};
use crate::Timestamp;

/// Events from this source may create nodes in any layer, including values.
pub const ONBOARDING_SOURCE: &str = "onboarding";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate dimension `{0}`")]
    DuplicateDimension(String),
    #[error("framework has no dimensions")]
    EmptyFramework,
    #[error("unknown dimension group `{0}`")]
    UnknownGroup(String),
    #[error("dimension `{id}` has invalid weight {weight}")]
    InvalidWeight { id: String, weight: f64 },
    #[error("duplicate candidate `{0}`")]
    DuplicateCandidate(String),
    #[error("profile on line {line} has no id")]
    MissingId { line: usize },
    #[error("candidate `{candidate}` has proficiency {value} for `{dimension}` outside [0, 1]")]
    OutOfRangeProficiency {
        candidate: String,
        dimension: String,
        value: f64,
    },
    #[error("event {sequence}: target {key} does not exist")]
    UnknownTarget { sequence: u64, key: NodeKey },
    #[error("event {sequence}: {reason}")]
    MalformedEvent { sequence: u64, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

// ---------------------------------------------------------------------------
// Competency framework
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionGroup {
    Knowledge,
    Technical,
    SoftSkills,
    OrgCultureFit,
}

impl DimensionGroup {
    pub const ALL: [DimensionGroup; 4] = [
        DimensionGroup::Knowledge,
        DimensionGroup::Technical,
        DimensionGroup::SoftSkills,
        DimensionGroup::OrgCultureFit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DimensionGroup::Knowledge => "knowledge",
            DimensionGroup::Technical => "technical",
            DimensionGroup::SoftSkills => "soft_skills",
            DimensionGroup::OrgCultureFit => "org_culture_fit",
        }
    }
}

impl fmt::Display for DimensionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DimensionGroup {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| IngestError::UnknownGroup(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub id: String,
    pub group: DimensionGroup,
    pub label: String,
    /// Normalized: weights over the whole framework sum to 1.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetencyFramework {
    dimensions: Vec<Dimension>,
}

#[derive(Debug, Deserialize)]
struct FrameworkDoc {
    dimensions: Vec<DimensionDoc>,
}

#[derive(Debug, Deserialize)]
struct DimensionDoc {
    id: String,
    group: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    weight: Option<f64>,
}

impl CompetencyFramework {
    /// Build a framework from raw `(id, group, label, weight)` entries.
    ///
    /// Missing weights count as 1 before normalization, so a framework with no
    /// weights at all ends up uniform.
    pub fn new(entries: Vec<(String, DimensionGroup, String, Option<f64>)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(IngestError::EmptyFramework);
        }
        let mut seen = BTreeSet::new();
        for (id, ..) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(IngestError::DuplicateDimension(id.clone()));
            }
        }
        for (id, _, _, weight) in &entries {
            if let Some(w) = weight {
                if !w.is_finite() || *w < 0.0 {
                    return Err(IngestError::InvalidWeight { id: id.clone(), weight: *w });
                }
            }
        }
        let total: f64 = entries.iter().map(|(.., w)| w.unwrap_or(1.0)).sum();
        if total <= 0.0 {
            let id = entries[0].0.clone();
            return Err(IngestError::InvalidWeight { id, weight: 0.0 });
        }
        let dimensions = entries
            .into_iter()
            .map(|(id, group, label, weight)| Dimension {
                id,
                group,
                label,
                weight: weight.unwrap_or(1.0) / total,
            })
            .collect();
        Ok(Self { dimensions })
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension(&self, id: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.id == id)
    }

    pub fn groups(&self) -> BTreeSet<DimensionGroup> {
        self.dimensions.iter().map(|d| d.group).collect()
    }

    pub fn in_group(&self, group: DimensionGroup) -> impl Iterator<Item = &Dimension> {
        self.dimensions.iter().filter(move |d| d.group == group)
    }
}

pub fn load_framework(document: &str) -> Result<CompetencyFramework> {
    let doc: FrameworkDoc = serde_json::from_str(document).map_err(|e| IngestError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let entries = doc
        .dimensions
        .into_iter()
        .map(|d| {
            let group = d.group.parse()?;
            let label = d.label.unwrap_or_else(|| d.id.clone());
            Ok((d.id, group, label, d.weight))
        })
        .collect::<Result<Vec<_>>>()?;
    CompetencyFramework::new(entries)
}

// ---------------------------------------------------------------------------
// Candidate profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProfile {
    pub id: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, f64>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default)]
    pub dossier: String,
}

fn non_empty_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty())
}

/// Parse a line-delimited profile pool, keeping pool order.
pub fn load_profiles(documents: &str) -> Result<Vec<CandidateProfile>> {
    let mut pool: Vec<CandidateProfile> = Vec::new();
    for (line, text) in non_empty_lines(documents) {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| IngestError::Parse {
            line,
            message: e.to_string(),
        })?;
        if !value.get("id").and_then(|id| id.as_str()).is_some_and(|id| !id.trim().is_empty()) {
            return Err(IngestError::MissingId { line });
        }
        let profile: CandidateProfile = serde_json::from_value(value).map_err(|e| IngestError::Parse {
            line,
            message: e.to_string(),
        })?;
        if let Some((dimension, &value)) = profile
            .attributes
            .iter()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(IngestError::OutOfRangeProficiency {
                candidate: profile.id.clone(),
                dimension: dimension.clone(),
                value,
            });
        }
        if pool.iter().any(|p| p.id == profile.id) {
            return Err(IngestError::DuplicateCandidate(profile.id));
        }
        pool.push(profile);
    }
    Ok(pool)
}

// ---------------------------------------------------------------------------
// Context events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub target: NodeKey,
    pub polarity: Polarity,
    pub reliability: f64,
    pub uncertainty: f64,
    #[serde(default)]
    pub payload: String,
    /// Node the target supports or contradicts, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterpart: Option<NodeKey>,
    /// Weight of the ensured edge; defaults to the assertion's reliability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEvent {
    pub sequence: u64,
    pub observed_at: Timestamp,
    pub source: String,
    pub assertion: Assertion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_tag: Option<String>,
}

impl ContextEvent {
    fn structural_problem(&self) -> Option<String> {
        let a = &self.assertion;
        if self.source.trim().is_empty() {
            return Some("empty source".into());
        }
        if a.target.label.trim().is_empty() {
            return Some("empty target label".into());
        }
        if a.counterpart.as_ref().is_some_and(|c| c.label.trim().is_empty()) {
            return Some("empty counterpart label".into());
        }
        for (field, value) in [
            ("reliability", Some(a.reliability)),
            ("uncertainty", Some(a.uncertainty)),
            ("link_weight", a.link_weight),
        ] {
            if let Some(v) = value.filter(|v| !(0.0..=1.0).contains(v)) {
                return Some(format!("{field} {v} outside [0, 1]"));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Create missing non-values target nodes instead of rejecting the event.
    pub auto_create: bool,
    /// Abort the whole batch on the first bad event, leaving the graph untouched.
    pub strict: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            auto_create: true,
            strict: false,
        }
    }
}

impl IngestOptions {
    pub fn strict() -> Self {
        Self {
            auto_create: true,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// Event sequence number, or `None` when the line did not parse.
    pub sequence: Option<u64>,
    pub line: Option<usize>,
    pub reason: String,
}

/// Outcome of one ingest batch.
///
/// Every processed assertion lands in exactly one bucket: it created its
/// target node (and attached evidence there), attached evidence to an
/// existing node, or was rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub processed: usize,
    pub nodes_created: usize,
    pub evidence_attached: usize,
    pub rejected: usize,
    pub edges_ensured: usize,
    pub rejections: Vec<Rejection>,
}

enum Outcome {
    Created,
    Attached,
}

/// Anchor one validated event. Leaves `graph` untouched on error.
fn anchor(graph: &mut MirrorGraph, event: &ContextEvent, options: IngestOptions) -> Result<(Outcome, bool)> {
    if let Some(reason) = event.structural_problem() {
        return Err(IngestError::MalformedEvent {
            sequence: event.sequence,
            reason,
        });
    }
    let a = &event.assertion;
    let onboarding = event.source == ONBOARDING_SOURCE;
    let may_create = |key: &NodeKey| onboarding || (options.auto_create && key.layer != Layer::Values);

    let existing = graph.find(&a.target);
    if existing.is_none() && !may_create(&a.target) {
        return Err(IngestError::UnknownTarget {
            sequence: event.sequence,
            key: a.target.clone(),
        });
    }
    let counterpart = match &a.counterpart {
        Some(key) => match graph.find(key) {
            Some(id) => Some(id),
            None if onboarding => None,
            None => {
                return Err(IngestError::UnknownTarget {
                    sequence: event.sequence,
                    key: key.clone(),
                })
            }
        },
        None => None,
    };

    let mut work = graph.clone();
    work.advance_clock(event.observed_at);
    let target = work.upsert_node(&a.target)?;
    let mut evidence = NewEvidence::new(event.source.clone(), event.observed_at, a.reliability, a.uncertainty)
        .payload(a.payload.clone())
        .polarity(a.polarity);
    evidence.episode_tag = event.episode_tag.clone();
    work.attach_evidence(target, evidence)?;

    let mut edge = false;
    if let Some(key) = &a.counterpart {
        let other = match counterpart {
            Some(id) => id,
            None => work.upsert_node(key)?,
        };
        let relation = match a.polarity {
            Polarity::Supports => Relation::Amplification,
            Polarity::Contradicts => Relation::Contradiction,
        };
        work.add_edge(target, other, relation, a.link_weight.unwrap_or(a.reliability))?;
        edge = true;
    }
    *graph = work;
    let outcome = if existing.is_some() { Outcome::Attached } else { Outcome::Created };
    Ok((outcome, edge))
}

/// Ingest an ordered event batch.
///
/// Sequence numbers must strictly increase; an event that breaks the order
/// is malformed. The graph clock ends at the latest accepted observation.
pub fn ingest_events(graph: &mut MirrorGraph, events: &[ContextEvent], options: IngestOptions) -> Result<IngestReport> {
    let lines: Vec<_> = events.iter().cloned().map(Ok).collect();
    ingest_parsed(graph, lines, options)
}

/// One line of an event log: parsed, or the line number and parse error.
pub type ParsedLine = std::result::Result<ContextEvent, (usize, String)>;

pub fn parse_event_log(text: &str) -> Vec<ParsedLine> {
    non_empty_lines(text)
        .map(|(line, body)| serde_json::from_str(body).map_err(|e| (line, e.to_string())))
        .collect()
}

/// Parse and ingest a line-delimited event log. Unparseable lines are
/// malformed events.
pub fn ingest_log(graph: &mut MirrorGraph, text: &str, options: IngestOptions) -> Result<IngestReport> {
    ingest_parsed(graph, parse_event_log(text), options)
}

fn ingest_parsed(graph: &mut MirrorGraph, lines: Vec<ParsedLine>, options: IngestOptions) -> Result<IngestReport> {
    let mut work = graph.clone();
    let mut report = IngestReport::default();
    let mut last_sequence: Option<u64> = None;

    for parsed in lines {
        report.processed += 1;
        let result = match parsed {
            Err((line, message)) => Err((
                Rejection {
                    sequence: None,
                    line: Some(line),
                    reason: message.clone(),
                },
                IngestError::Parse { line, message },
            )),
            Ok(event) if last_sequence.is_some_and(|prev| event.sequence <= prev) => {
                let reason = format!("sequence {} does not follow {}", event.sequence, last_sequence.unwrap_or(0));
                Err((
                    Rejection {
                        sequence: Some(event.sequence),
                        line: None,
                        reason: reason.clone(),
                    },
                    IngestError::MalformedEvent {
                        sequence: event.sequence,
                        reason,
                    },
                ))
            }
            Ok(event) => match anchor(&mut work, &event, options) {
                Ok(done) => {
                    last_sequence = Some(event.sequence);
                    Ok(done)
                }
                Err(err) => Err((
                    Rejection {
                        sequence: Some(event.sequence),
                        line: None,
                        reason: err.to_string(),
                    },
                    err,
                )),
            },
        };
        match result {
            Ok((outcome, edge)) => {
                match outcome {
                    Outcome::Created => report.nodes_created += 1,
                    Outcome::Attached => report.evidence_attached += 1,
                }
                report.edges_ensured += usize::from(edge);
            }
            Err((_, err)) if options.strict => return Err(err),
            Err((rejection, _)) => {
                report.rejected += 1;
                report.rejections.push(rejection);
            }
        }
    }
    debug_assert_eq!(
        report.nodes_created + report.evidence_attached + report.rejected,
        report.processed
    );
    *graph = work;
    Ok(report)
}
