//! Co-evolution: pending proposals, human decisions, and versioned config.
//!
//! Nothing applies without a decision. Approvals mutate the graph or the
//! config and bump the config version once each; rejections are archived.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EpisodeConfig, EpisodeError, Result};
use crate::graph::{MirrorGraph, NewEvidence};
use crate::synapse::{propose_updates, ProposalKind, ProposalStatus, ProposalTarget, SignalSummary, UpdateProposal, REGIME_KEY};

/// Source recorded on evidence added by approved proposals.
pub const SYNAPSE_SOURCE: &str = "synapse";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigChange {
    pub version: u64,
    pub proposal: String,
    pub description: String,
}

/// Episode config with a version that moves on every approved change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernedConfig {
    pub version: u64,
    pub regime_epoch: u64,
    pub config: EpisodeConfig,
    pub changes: Vec<ConfigChange>,
}

impl GovernedConfig {
    pub fn new(config: EpisodeConfig) -> Self {
        Self {
            version: 0,
            regime_epoch: 0,
            config,
            changes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProposalBook {
    pending: BTreeMap<String, UpdateProposal>,
    decided: BTreeMap<String, UpdateProposal>,
}

impl ProposalBook {
    /// Register a pending proposal. Returns false if the id is already known.
    pub fn submit(&mut self, proposal: UpdateProposal) -> bool {
        if self.pending.contains_key(&proposal.id) || self.decided.contains_key(&proposal.id) {
            return false;
        }
        debug_assert_eq!(proposal.status, ProposalStatus::Pending);
        self.pending.insert(proposal.id.clone(), proposal);
        true
    }

    pub fn pending(&self) -> impl Iterator<Item = &UpdateProposal> {
        self.pending.values()
    }

    pub fn archived(&self) -> impl Iterator<Item = &UpdateProposal> {
        self.decided.values().filter(|p| p.status == ProposalStatus::Rejected)
    }

    pub fn get(&self, id: &str) -> Option<&UpdateProposal> {
        self.pending.get(id).or_else(|| self.decided.get(id))
    }

    pub fn all(&self) -> impl Iterator<Item = &UpdateProposal> {
        self.pending.values().chain(self.decided.values())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub proposal: String,
    pub approve: bool,
    #[serde(default)]
    pub actor: String,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedChange {
    pub proposal: String,
    pub kind: ProposalKind,
    pub description: String,
    pub config_version: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoevolutionOutcome {
    pub applied: Vec<AppliedChange>,
    pub archived: Vec<String>,
    pub new_proposals: Vec<String>,
    pub config_version: u64,
}

/// Apply one approved proposal to a working graph and config.
pub fn apply_proposal(graph: &mut MirrorGraph, config: &mut GovernedConfig, proposal: &UpdateProposal) -> Result<String> {
    let invalid = |reason: String| EpisodeError::InvalidProposal {
        id: proposal.id.clone(),
        reason,
    };
    let description = match (&proposal.kind, &proposal.target) {
        (ProposalKind::RaiseUncertainty, ProposalTarget::Node(node)) => {
            graph
                .raise_uncertainty(*node, proposal.magnitude)
                .map_err(|e| invalid(e.to_string()))?;
            format!("raised uncertainty on {node} by {:.3}", proposal.magnitude)
        }
        (ProposalKind::AddEvidence, ProposalTarget::Node(node)) => {
            let at = graph.clock().ok_or_else(|| invalid("graph clock is unset".into()))?;
            let evidence = NewEvidence::new(SYNAPSE_SOURCE, at, proposal.magnitude, 0.5).payload(proposal.rationale.clone());
            let id = graph.attach_evidence(*node, evidence).map_err(|e| invalid(e.to_string()))?;
            format!("attached {id} to {node}")
        }
        (ProposalKind::RegimeShift, ProposalTarget::Config(key)) if key == REGIME_KEY => {
            config.regime_epoch += 1;
            format!("regime epoch -> {}", config.regime_epoch)
        }
        (ProposalKind::AdjustThreshold, ProposalTarget::Config(key)) => {
            let value = proposal.magnitude;
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid(format!("threshold {value} outside [0, 1]")));
            }
            let slot = match key.as_str() {
                "ethical_gate_threshold" => &mut config.config.ethical_gate_threshold,
                "conflict_threshold" => &mut config.config.conflict_threshold,
                other => return Err(invalid(format!("unknown threshold `{other}`"))),
            };
            let old = std::mem::replace(slot, value);
            format!("{key}: {old} -> {value}")
        }
        (kind, target) => return Err(invalid(format!("{kind} cannot target {target}"))),
    };
    config.version += 1;
    config.changes.push(ConfigChange {
        version: config.version,
        proposal: proposal.id.clone(),
        description: description.clone(),
    });
    Ok(description)
}

/// Apply human decisions, then register proposals raised by new error statistics.
///
/// All decisions are validated before anything changes; any failure leaves
/// graph, config and book untouched.
pub fn coevolution_step(
    graph: &mut MirrorGraph,
    config: &mut GovernedConfig,
    book: &mut ProposalBook,
    stats: Option<&SignalSummary>,
    decisions: &[Decision],
) -> Result<CoevolutionOutcome> {
    let mut seen = std::collections::BTreeSet::new();
    for d in decisions {
        if book.decided.contains_key(&d.proposal) || !seen.insert(d.proposal.as_str()) {
            return Err(EpisodeError::AlreadyDecided(d.proposal.clone()));
        }
        if !book.pending.contains_key(&d.proposal) {
            return Err(EpisodeError::UnknownProposal(d.proposal.clone()));
        }
    }

    let mut work_graph = graph.clone();
    let mut work_config = config.clone();
    let mut work_book = book.clone();
    let mut outcome = CoevolutionOutcome::default();

    for d in decisions {
        let mut proposal = work_book.pending.remove(&d.proposal).expect("validated above");
        proposal
            .decide(d.approve)
            .map_err(|e| EpisodeError::AlreadyDecided(e.0))?;
        if d.approve {
            let description = apply_proposal(&mut work_graph, &mut work_config, &proposal)?;
            outcome.applied.push(AppliedChange {
                proposal: proposal.id.clone(),
                kind: proposal.kind,
                description,
                config_version: work_config.version,
            });
        } else {
            outcome.archived.push(proposal.id.clone());
        }
        work_book.decided.insert(proposal.id.clone(), proposal);
    }

    if let Some(stats) = stats {
        for p in propose_updates(&work_graph, &stats.errors, &stats.context, &work_config.config.synapse) {
            let id = p.id.clone();
            if work_book.submit(p) {
                outcome.new_proposals.push(id);
            }
        }
    }

    outcome.config_version = work_config.version;
    *graph = work_graph;
    *config = work_config;
    *book = work_book;
    Ok(outcome)
}
