//! Metacognitive oversight: conflict monitoring over node evidence.
//!
//! A node is conflicted when its supporting and contradicting evidence each
//! reach the conflict threshold on their own (noisy-OR per side). The side
//! with the lower mean reliability gets its evidence down-weighted and more
//! evidence is requested. A conflict that was already present in the
//! previous episode escalates to the human.

use serde::{Deserialize, Serialize};

use super::{DecisionEpisode, EpisodeConfig};
use crate::graph::{noisy_or, EvidenceId, MirrorGraph, NodeId, Polarity};
use crate::synapse::{ProposalKind, UpdateProposal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetaActionKind {
    DownWeight { evidence: EvidenceId, factor: f64 },
    RequestEvidence { node: NodeId },
    Escalate { reason: String },
    ReviseStructure { proposal: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaAction {
    #[serde(flatten)]
    pub kind: MetaActionKind,
    pub trigger: String,
}

impl MetaAction {
    pub fn is_escalation(&self) -> bool {
        matches!(self.kind, MetaActionKind::Escalate { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub node: NodeId,
    pub support: f64,
    pub contradiction: f64,
    /// Side whose evidence is less reliable on average.
    pub weaker: Polarity,
    pub weaker_evidence: Vec<EvidenceId>,
}

pub fn detect_conflicts(snapshot: &MirrorGraph, threshold: f64) -> Vec<Conflict> {
    let Some(as_of) = snapshot.clock() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for node in snapshot.nodes() {
        let side = |polarity: Polarity| {
            let records: Vec<_> = node.evidence.iter().filter(|ev| ev.polarity == polarity).collect();
            let aggregate = noisy_or(records.iter().map(|ev| snapshot.contribution_of(ev, as_of)));
            let reliability = if records.is_empty() {
                0.0
            } else {
                records.iter().map(|ev| ev.reliability).sum::<f64>() / records.len() as f64
            };
            (aggregate, reliability, records.iter().map(|ev| ev.id).collect::<Vec<_>>())
        };
        let (support, support_rel, support_ids) = side(Polarity::Supports);
        let (contradiction, contra_rel, contra_ids) = side(Polarity::Contradicts);
        if support < threshold || contradiction < threshold {
            continue;
        }
        let (weaker, weaker_evidence) = if support_rel < contra_rel {
            (Polarity::Supports, support_ids)
        } else {
            (Polarity::Contradicts, contra_ids)
        };
        out.push(Conflict {
            node: node.id,
            support,
            contradiction,
            weaker,
            weaker_evidence,
        });
    }
    out
}

/// Whether multiplying one record's weight by `factor` strictly lowers its node's confidence.
fn lowers_confidence(snapshot: &MirrorGraph, node: NodeId, evidence: EvidenceId, factor: f64) -> bool {
    let (Some(as_of), Some(node)) = (snapshot.clock(), snapshot.node(node)) else {
        return false;
    };
    let contributions = |scale: bool| {
        node.evidence.iter().map(move |ev| {
            let c = snapshot.contribution_of(ev, as_of);
            if scale && ev.id == evidence {
                c * factor
            } else {
                c
            }
        })
    };
    noisy_or(contributions(true)) < noisy_or(contributions(false))
}

/// Review a snapshot in light of the preceding episodes (oldest first).
///
/// `proposals` are the co-evolution proposals raised in the same episode;
/// regime shifts among them ask for a structural revision.
pub fn metacognitive_review(
    snapshot: &MirrorGraph,
    history: &[DecisionEpisode],
    proposals: &[UpdateProposal],
    config: &EpisodeConfig,
) -> Vec<MetaAction> {
    let conflicts = detect_conflicts(snapshot, config.conflict_threshold);
    let mut actions = Vec::new();
    for c in &conflicts {
        let label = snapshot.node(c.node).map_or("?", |n| n.label.as_str());
        let trigger = format!(
            "`{label}` support {:.3} vs contradiction {:.3} (threshold {:.3})",
            c.support, c.contradiction, config.conflict_threshold
        );
        for &evidence in &c.weaker_evidence {
            if lowers_confidence(snapshot, c.node, evidence, config.down_weight_factor) {
                actions.push(MetaAction {
                    kind: MetaActionKind::DownWeight {
                        evidence,
                        factor: config.down_weight_factor,
                    },
                    trigger: trigger.clone(),
                });
            }
        }
        actions.push(MetaAction {
            kind: MetaActionKind::RequestEvidence { node: c.node },
            trigger,
        });
    }

    if let Some(previous) = history.last() {
        let persistent: Vec<String> = conflicts
            .iter()
            .filter(|c| previous.conflicts.contains(&c.node))
            .map(|c| snapshot.node(c.node).map_or_else(|| c.node.to_string(), |n| n.label.clone()))
            .collect();
        if !persistent.is_empty() {
            actions.push(MetaAction {
                kind: MetaActionKind::Escalate {
                    reason: format!("conflict persists across consecutive episodes on {}", persistent.join(", ")),
                },
                trigger: format!("previous episode {}", previous.id),
            });
        }
    }

    for p in proposals.iter().filter(|p| p.kind == ProposalKind::RegimeShift) {
        actions.push(MetaAction {
            kind: MetaActionKind::ReviseStructure { proposal: p.id.clone() },
            trigger: p.rationale.clone(),
        });
    }
    actions
}
