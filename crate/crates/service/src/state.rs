//! State rebuilt from the log: graph, governed config, proposals, overrides.

use mirror_core::episode::{coevolution_step, CoevolutionOutcome, Decision, EpisodeConfig, GovernedConfig, ProposalBook};
use mirror_core::graph::{GraphWriter, MirrorGraph, Snapshot};
use mirror_core::ingest::{ingest_events, ContextEvent, IngestOptions, IngestReport};
use mirror_core::synapse::UpdateProposal;
use mirror_core::Timestamp;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ServiceError;
use crate::log::EntryKind;

/// A human annotation on an episode. Never edits the episode itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub episode: String,
    pub actor: String,
    /// Candidate the human picks or repositions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
    /// 1-based position assigned to `candidate`; absent means "final choice".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    pub rationale: String,
    pub at: Timestamp,
}

/// Body of a `proposal_decision` entry: registering a proposal or deciding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ProposalAction {
    Submit { proposal: UpdateProposal },
    Decide { decision: Decision },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigBody {
    pub config: EpisodeConfig,
    #[serde(default)]
    pub actor: String,
}

#[derive(Debug, Clone)]
pub struct State {
    pub graph: GraphWriter,
    pub config: GovernedConfig,
    pub book: ProposalBook,
    /// Overrides with the log index that recorded them.
    pub overrides: Vec<(u64, OverrideRecord)>,
    next_index: u64,
}

/// What applying one entry produced, for callers that want to report it.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Ingested(IngestReport),
    Submitted,
    Decided(CoevolutionOutcome),
    Override,
    Config,
}

impl State {
    pub fn new(owner: &str, config: EpisodeConfig) -> Self {
        Self {
            graph: GraphWriter::new(MirrorGraph::new(owner)),
            config: GovernedConfig::new(config),
            book: ProposalBook::default(),
            overrides: Vec::new(),
            next_index: 0,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        self.graph.snapshot()
    }

    pub fn snapshot_hash(&self) -> String {
        self.graph.snapshot().snapshot_hash()
    }

    /// Apply one entry body. On error nothing changes.
    pub fn apply(&mut self, kind: EntryKind, body: &Value) -> Result<Applied, ServiceError> {
        let parse_err = |e: serde_json::Error| ServiceError::BadRequest(format!("{kind} body: {e}"));
        let applied = match kind {
            EntryKind::ContextEvent => {
                let event: ContextEvent = serde_json::from_value(body.clone()).map_err(parse_err)?;
                let report = self
                    .graph
                    .apply(|g| ingest_events(g, std::slice::from_ref(&event), IngestOptions::strict()))?;
                Applied::Ingested(report)
            }
            EntryKind::ProposalDecision => match serde_json::from_value(body.clone()).map_err(parse_err)? {
                ProposalAction::Submit { proposal } => {
                    let id = proposal.id.clone();
                    if !self.book.submit(proposal) {
                        return Err(ServiceError::BadRequest(format!("proposal `{id}` already exists")));
                    }
                    Applied::Submitted
                }
                ProposalAction::Decide { decision } => {
                    let mut config = self.config.clone();
                    let mut book = self.book.clone();
                    let outcome = self
                        .graph
                        .apply(|g| coevolution_step(g, &mut config, &mut book, None, std::slice::from_ref(&decision)))?;
                    self.config = config;
                    self.book = book;
                    Applied::Decided(outcome)
                }
            },
            EntryKind::Override => {
                let record: OverrideRecord = serde_json::from_value(body.clone()).map_err(parse_err)?;
                self.overrides.push((self.next_index, record));
                Applied::Override
            }
            EntryKind::ConfigChange => {
                let ConfigBody { config, actor } = serde_json::from_value(body.clone()).map_err(parse_err)?;
                config.validate()?;
                self.config.version += 1;
                self.config.config = config;
                self.config.changes.push(mirror_core::episode::ConfigChange {
                    version: self.config.version,
                    proposal: String::new(),
                    description: format!("config replaced by `{actor}`"),
                });
                Applied::Config
            }
        };
        self.next_index += 1;
        Ok(applied)
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }
}
