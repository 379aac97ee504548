//! The service core shared by the HTTP API and the CLI.
//!
//! One mutex guards the writer side (log append + state). Episodes run on a
//! snapshot taken under the lock and are published under it again, after a
//! staleness check; readers only ever see immutable snapshots.

use std::path::PathBuf;
use std::sync::Mutex;

use chrono::Utc;
use mirror_core::episode::{
    ensure_current, run_episode, CoevolutionOutcome, Decision, DecisionEpisode, EpisodeConfig, EpisodeInputs,
    GovernedConfig, Mode,
};
use mirror_core::fit::{fit_score, Evaluation, FitOptions, FitReport};
use mirror_core::fixtures;
use mirror_core::graph::{EvidenceRecord, GraphEdge, GraphNode, NodeId, Snapshot};
use mirror_core::ingest::{self, CandidateProfile, IngestOptions, IngestReport, Rejection};
use mirror_core::synapse::{ProposalKind, ProposalStatus, ProposalTarget, SignalSummary, UpdateProposal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ServiceError;
use crate::log::{replay_log, EntryKind, LogEntry, GENESIS};
use crate::state::{Applied, ConfigBody, OverrideRecord, ProposalAction, State};
use crate::store::Store;

type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub owner: String,
    pub episode: EpisodeConfig,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            owner: fixtures::OWNER.to_string(),
            episode: EpisodeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EpisodeRequest {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Framework document (`{"dimensions": [...]}`); the bundled one if absent.
    #[serde(default)]
    pub framework: Option<Value>,
    #[serde(default)]
    pub profiles: Option<Vec<CandidateProfile>>,
    #[serde(default)]
    pub signals: Option<SignalSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverrideInput {
    pub actor: String,
    #[serde(default)]
    pub candidate: Option<String>,
    #[serde(default)]
    pub position: Option<usize>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideView {
    pub index: u64,
    #[serde(flatten)]
    pub record: OverrideRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeView {
    pub episode: DecisionEpisode,
    pub overrides: Vec<OverrideView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceView {
    #[serde(flatten)]
    pub record: EvidenceRecord,
    pub contribution: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub layer: mirror_core::graph::Layer,
    pub kind: mirror_core::graph::NodeKind,
    pub label: String,
    pub confidence: f64,
    pub evidence: Vec<EvidenceView>,
    pub outgoing: Vec<GraphEdge>,
    pub incoming: Vec<GraphEdge>,
    pub snapshot_version: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposalsView {
    pub pending: Vec<UpdateProposal>,
    pub decided: Vec<UpdateProposal>,
    pub config: GovernedConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposalInput {
    pub kind: ProposalKind,
    pub target: ProposalTarget,
    pub magnitude: f64,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionInput {
    pub approve: bool,
    #[serde(default)]
    pub actor: String,
    #[serde(default)]
    pub rationale: String,
}

struct Inner {
    state: State,
    last_checksum: String,
}

pub struct Service {
    store: Store,
    owner: String,
    base_config: EpisodeConfig,
    inner: Mutex<Inner>,
}

fn to_body<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("bodies serialize")
}

impl Service {
    /// Open a data directory, verifying and replaying its log.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        config.episode.validate()?;
        let store = Store::open(&config.data_dir)?;
        let entries = store.read_log()?;
        let state = replay_log(&entries, State::new(&config.owner, config.episode.clone()))?;
        let last_checksum = entries.last().map_or_else(|| GENESIS.to_string(), |e| e.checksum.clone());
        Ok(Self {
            store,
            owner: config.owner,
            base_config: config.episode,
            inner: Mutex::new(Inner { state, last_checksum }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Apply and persist one entry. Nothing changes if either step fails.
    fn commit(&self, inner: &mut Inner, kind: EntryKind, body: Value) -> Result<(u64, Applied)> {
        let mut next = inner.state.clone();
        let applied = next.apply(kind, &body)?;
        let index = inner.state.next_index();
        let entry = LogEntry::new(index, kind, body, next.snapshot_hash(), &inner.last_checksum);
        self.store.append(&entry)?;
        inner.last_checksum = entry.checksum;
        inner.state = next;
        Ok((index, applied))
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn snapshot(&self) -> Snapshot {
        self.lock().state.snapshot()
    }

    pub fn snapshot_hash(&self) -> String {
        self.snapshot().snapshot_hash()
    }

    pub fn log_len(&self) -> u64 {
        self.lock().state.next_index()
    }

    pub fn governed_config(&self) -> GovernedConfig {
        self.lock().state.config.clone()
    }

    /// Ingest a line-delimited event log. Accepted events are logged one
    /// entry each; with `strict`, any bad line rejects the whole batch.
    pub fn ingest(&self, text: &str, strict: bool) -> Result<IngestReport> {
        let mut inner = self.lock();
        if strict {
            let mut dry = (*inner.state.snapshot()).clone();
            ingest::ingest_log(&mut dry, text, IngestOptions::strict())?;
        }
        let mut report = IngestReport::default();
        for parsed in ingest::parse_event_log(text) {
            report.processed += 1;
            let event = match parsed {
                Ok(event) => event,
                Err((line, message)) => {
                    report.rejected += 1;
                    report.rejections.push(Rejection {
                        sequence: None,
                        line: Some(line),
                        reason: message,
                    });
                    continue;
                }
            };
            match self.commit(&mut inner, EntryKind::ContextEvent, to_body(&event)) {
                Ok((_, Applied::Ingested(r))) => {
                    report.nodes_created += r.nodes_created;
                    report.evidence_attached += r.evidence_attached;
                    report.edges_ensured += r.edges_ensured;
                }
                Ok(_) => unreachable!("context events ingest"),
                Err(ServiceError::Ingest(e)) => {
                    report.rejected += 1;
                    report.rejections.push(Rejection {
                        sequence: Some(event.sequence),
                        line: None,
                        reason: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(report)
    }

    fn episode_inputs(request: &EpisodeRequest) -> Result<EpisodeInputs> {
        let framework = match &request.framework {
            Some(doc) => ingest::load_framework(&doc.to_string())?,
            None => fixtures::framework(),
        };
        let profiles = match &request.profiles {
            Some(list) => {
                let lines: Vec<String> = list.iter().map(|p| serde_json::to_string(p).expect("profiles serialize")).collect();
                ingest::load_profiles(&lines.join("\n"))?
            }
            None => fixtures::profiles(),
        };
        Ok(EpisodeInputs {
            framework,
            profiles,
            signals: request.signals.clone(),
        })
    }

    fn last_episode(&self, mode: Mode) -> Result<Option<DecisionEpisode>> {
        for id in self.store.episode_order()?.iter().rev() {
            let episode = self.store.get_episode(id)?;
            if episode.mode == mode {
                return Ok(Some(episode));
            }
        }
        Ok(None)
    }

    /// Run an episode on the current snapshot, store it, and register the
    /// proposals it raised as pending.
    pub fn run_episode(&self, request: &EpisodeRequest) -> Result<DecisionEpisode> {
        let inputs = Self::episode_inputs(request)?;
        let mode = request.mode.unwrap_or(Mode::ContextRich);
        let history: Vec<DecisionEpisode> = self.last_episode(mode)?.into_iter().collect();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let (snapshot, mut config) = {
                let inner = self.lock();
                (inner.state.snapshot(), inner.state.config.config.clone())
            };
            config.mode = mode;
            if let Some(seed) = request.seed {
                config.seed = seed;
            }
            let episode = run_episode(&snapshot, &inputs, &config, &history)?;

            let mut inner = self.lock();
            if let Err(stale) = ensure_current(episode.snapshot_version, inner.state.graph.version()) {
                if attempts < 3 {
                    continue;
                }
                return Err(stale.into());
            }
            self.store.put_episode(&episode)?;
            for proposal in &episode.proposals {
                if inner.state.book.get(&proposal.id).is_none() {
                    let body = to_body(&ProposalAction::Submit {
                        proposal: proposal.clone(),
                    });
                    self.commit(&mut inner, EntryKind::ProposalDecision, body)?;
                }
            }
            return Ok(episode);
        }
    }

    pub fn episode(&self, id: &str) -> Result<DecisionEpisode> {
        self.store.get_episode(id)
    }

    pub fn episode_view(&self, id: &str) -> Result<EpisodeView> {
        let episode = self.store.get_episode(id)?;
        let overrides = self
            .lock()
            .state
            .overrides
            .iter()
            .filter(|(_, r)| r.episode == id)
            .map(|(index, record)| OverrideView {
                index: *index,
                record: record.clone(),
            })
            .collect();
        Ok(EpisodeView { episode, overrides })
    }

    /// Annotate an episode with a human override; returns the log index.
    pub fn record_override(&self, id: &str, input: OverrideInput) -> Result<u64> {
        let episode = self.store.get_episode(id)?;
        if input.rationale.trim().is_empty() {
            return Err(ServiceError::BadRequest("override rationale must not be empty".into()));
        }
        if input.actor.trim().is_empty() {
            return Err(ServiceError::BadRequest("override actor must not be empty".into()));
        }
        if let Some(candidate) = &input.candidate {
            if episode.position_of(candidate).is_none() {
                return Err(ServiceError::BadRequest(format!("`{candidate}` is not ranked in episode {id}")));
            }
        }
        if let Some(position) = input.position {
            if input.candidate.is_none() || position == 0 || position > episode.ranking.len() {
                return Err(ServiceError::BadRequest(format!(
                    "position must name a candidate and lie in 1..={}",
                    episode.ranking.len()
                )));
            }
        }
        let record = OverrideRecord {
            episode: id.to_string(),
            actor: input.actor,
            candidate: input.candidate,
            position: input.position,
            rationale: input.rationale,
            at: Utc::now(),
        };
        let mut inner = self.lock();
        let (index, _) = self.commit(&mut inner, EntryKind::Override, to_body(&record))?;
        Ok(index)
    }

    /// Accepts `n3` or `3`.
    pub fn node_view(&self, id: &str) -> Result<NodeView> {
        let unknown = || ServiceError::UnknownNode(id.to_string());
        let raw = id.strip_prefix('n').unwrap_or(id);
        let node_id = NodeId(raw.parse().map_err(|_| unknown())?);
        let snapshot = self.snapshot();
        let node: &GraphNode = snapshot.node(node_id).ok_or_else(unknown)?;
        let as_of = snapshot.clock().unwrap_or(chrono::DateTime::UNIX_EPOCH);
        Ok(NodeView {
            id: node.id,
            layer: node.layer,
            kind: node.kind,
            label: node.label.clone(),
            confidence: snapshot.effective_confidence(node_id, as_of)?,
            evidence: node
                .evidence
                .iter()
                .map(|ev| EvidenceView {
                    record: ev.clone(),
                    contribution: snapshot.contribution_of(ev, as_of),
                })
                .collect(),
            outgoing: snapshot.edges().filter(|e| e.from == node_id).cloned().collect(),
            incoming: snapshot.edges().filter(|e| e.to == node_id).cloned().collect(),
            snapshot_version: snapshot.version(),
        })
    }

    pub fn proposals(&self) -> ProposalsView {
        let inner = self.lock();
        let book = &inner.state.book;
        ProposalsView {
            pending: book.pending().cloned().collect(),
            decided: book.all().filter(|p| p.status != ProposalStatus::Pending).cloned().collect(),
            config: inner.state.config.clone(),
        }
    }

    /// Register a proposal by hand (e.g. a threshold change suggested by a reviewer).
    pub fn submit_proposal(&self, input: ProposalInput) -> Result<UpdateProposal> {
        if !input.magnitude.is_finite() {
            return Err(ServiceError::BadRequest("magnitude must be finite".into()));
        }
        let mut inner = self.lock();
        let at = inner.state.snapshot().clock().unwrap_or_else(Utc::now);
        let rationale = if input.rationale.is_empty() {
            "submitted by reviewer".to_string()
        } else {
            input.rationale
        };
        let proposal = UpdateProposal::new(input.kind, input.target, input.magnitude, rationale, at);
        if inner.state.book.get(&proposal.id).is_some() {
            return Err(ServiceError::BadRequest(format!("proposal `{}` already exists", proposal.id)));
        }
        let body = to_body(&ProposalAction::Submit {
            proposal: proposal.clone(),
        });
        self.commit(&mut inner, EntryKind::ProposalDecision, body)?;
        Ok(proposal)
    }

    pub fn decide(&self, proposal: &str, input: DecisionInput) -> Result<CoevolutionOutcome> {
        let decision = Decision {
            proposal: proposal.to_string(),
            approve: input.approve,
            actor: input.actor,
            rationale: input.rationale,
        };
        let mut inner = self.lock();
        match self.commit(&mut inner, EntryKind::ProposalDecision, to_body(&ProposalAction::Decide { decision }))? {
            (_, Applied::Decided(outcome)) => Ok(outcome),
            _ => unreachable!("decisions produce outcomes"),
        }
    }

    /// Replace the episode config wholesale; returns the new config version.
    pub fn set_config(&self, config: EpisodeConfig, actor: &str) -> Result<u64> {
        let body = to_body(&ConfigBody {
            config,
            actor: actor.to_string(),
        });
        let mut inner = self.lock();
        self.commit(&mut inner, EntryKind::ConfigChange, body)?;
        Ok(inner.state.config.version)
    }

    /// Resolve an evaluation by name: a bundled human or reported ranking
    /// (`ceo`, `cto`, ...), `context_rich` / `context_free` (latest stored
    /// episode of that mode, or a fresh unsaved run), or an episode id.
    pub fn evaluation(&self, name: &str) -> Result<Evaluation> {
        let key = name.to_ascii_lowercase();
        if let Some(evaluation) = fixtures::evaluation(&key) {
            return Ok(evaluation);
        }
        if let Ok(mode) = key.parse::<Mode>() {
            let episode = match self.last_episode(mode)? {
                Some(episode) => episode,
                None => {
                    let (snapshot, config) = {
                        let inner = self.lock();
                        (inner.state.snapshot(), inner.state.config.config.clone())
                    };
                    run_episode(&snapshot, &fixtures::inputs(), &config.with_mode(mode), &[])?
                }
            };
            return Ok(episode.to_evaluation());
        }
        match self.store.get_episode(&key) {
            Ok(episode) => Ok(episode.to_evaluation()),
            Err(ServiceError::UnknownEpisode(_)) => Err(ServiceError::UnknownEvaluation(name.to_string())),
            Err(e) => Err(e),
        }
    }

    pub fn fit(&self, human: &str, machine: &str) -> Result<FitReport> {
        let h = self.evaluation(human)?;
        let m = self.evaluation(machine)?;
        Ok(fit_score(&h, &m, &FitOptions::default())?)
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn base_config(&self) -> &EpisodeConfig {
        &self.base_config
    }
}
