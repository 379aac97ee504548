//! The closed-loop decision episode.
//!
//! An episode runs five steps over an immutable graph snapshot:
//!
//! 1. collect and time-align the inputs (profiles, framework, signal summary);
//! 2. derive the persona state the episode reasons with;
//! 3. score every option, including not hiring anyone;
//! 4. note rule-derived short- and long-term risks;
//! 5. present a ranking with rationales and uncertainties.
//!
//! Scoring is a transparent weighted sum. In `context_rich` mode a bounded
//! adjustment from candidate-tagged graph constructs is added, and an ethical
//! gate disqualifies candidates whose constructs contradict a values-layer
//! node with enough confidence. The gate is lexicographic: disqualified
//! candidates always rank after everyone else. `context_free` mode is the
//! same scorer with the graph taken away.

mod coevolution;
mod oversight;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{canonical_json, digest_of};
use crate::fit::Evaluation;
use crate::graph::{EvidenceId, Layer, MirrorGraph, NodeId, NodeKind, Relation};
use crate::ingest::{CandidateProfile, CompetencyFramework, DimensionGroup};
use crate::synapse::{propose_updates, SignalSummary, SynapseConfig, UpdateProposal};
use crate::Timestamp;

pub use coevolution::{
    coevolution_step, AppliedChange, CoevolutionOutcome, ConfigChange, Decision, GovernedConfig, ProposalBook,
};
pub use oversight::{detect_conflicts, metacognitive_review, Conflict, MetaAction, MetaActionKind};

/// Option id for hiring nobody.
pub const NO_HIRE: &str = "no-hire";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeError {
    #[error("candidate `{candidate}` references unknown dimension `{dimension}`")]
    UnknownDimension { candidate: String, dimension: String },
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error("snapshot version {episode} is stale (latest {latest})")]
    SnapshotStale { episode: u64, latest: u64 },
    #[error("unknown proposal `{0}`")]
    UnknownProposal(String),
    #[error("proposal `{0}` was already decided")]
    AlreadyDecided(String),
    #[error("cannot apply proposal `{id}`: {reason}")]
    InvalidProposal { id: String, reason: String },
}

pub type Result<T, E = EpisodeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ContextRich,
    ContextFree,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ContextRich => "context_rich",
            Mode::ContextFree => "context_free",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = EpisodeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context_rich" => Ok(Mode::ContextRich),
            "context_free" => Ok(Mode::ContextFree),
            other => Err(EpisodeError::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    CandidateIdAscending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub mode: Mode,
    pub dimension_group_weights: BTreeMap<DimensionGroup, f64>,
    /// Confidence at which a values contradiction disqualifies.
    pub ethical_gate_threshold: f64,
    /// Aggregate contribution each side needs before a node counts as conflicted.
    pub conflict_threshold: f64,
    pub down_weight_factor: f64,
    /// Multiplier from signed edge-weighted confidence to score adjustment.
    pub context_scale: f64,
    pub max_context_adjustment: f64,
    /// Score of the inaction option.
    pub inaction_score: f64,
    pub tie_break: TieBreak,
    pub seed: u64,
    pub synapse: SynapseConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            mode: Mode::ContextRich,
            dimension_group_weights: BTreeMap::from([
                (DimensionGroup::Knowledge, 0.35),
                (DimensionGroup::Technical, 0.30),
                (DimensionGroup::SoftSkills, 0.20),
                (DimensionGroup::OrgCultureFit, 0.15),
            ]),
            ethical_gate_threshold: 0.7,
            conflict_threshold: 0.4,
            down_weight_factor: 0.5,
            context_scale: 0.25,
            max_context_adjustment: 0.25,
            inaction_score: 0.3,
            tie_break: TieBreak::CandidateIdAscending,
            seed: 0,
            synapse: SynapseConfig::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EpisodeError::InvalidConfig(msg));
        if self.dimension_group_weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("group weights must be nonnegative".into());
        }
        let sum: f64 = self.dimension_group_weights.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("group weights sum to {sum}, not 1"));
        }
        for (name, value) in [
            ("ethical_gate_threshold", self.ethical_gate_threshold),
            ("conflict_threshold", self.conflict_threshold),
            ("max_context_adjustment", self.max_context_adjustment),
            ("inaction_score", self.inaction_score),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return bad(format!("{name} = {value} outside [0, 1]"));
            }
        }
        if !(self.down_weight_factor > 0.0 && self.down_weight_factor < 1.0) {
            return bad(format!("down_weight_factor {} outside (0, 1)", self.down_weight_factor));
        }
        if !self.context_scale.is_finite() || self.context_scale < 0.0 {
            return bad("context_scale must be nonnegative".into());
        }
        self.synapse
            .validate()
            .map_err(|e| EpisodeError::InvalidConfig(e.to_string()))
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }
}

// ---------------------------------------------------------------------------
// Score cards and the gate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GateResult {
    Passed,
    Warned {
        confidence: f64,
        node: NodeId,
        evidence: Vec<EvidenceId>,
    },
    Disqualified {
        reason: String,
        confidence: f64,
        node: NodeId,
        evidence: Vec<EvidenceId>,
    },
}

impl GateResult {
    pub fn is_disqualified(&self) -> bool {
        matches!(self, GateResult::Disqualified { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Pro,
    Con,
    Note,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleLine {
    pub stance: Stance,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<EvidenceId>,
}

impl RationaleLine {
    fn new(stance: Stance, text: String, evidence: Vec<EvidenceId>) -> Self {
        Self { stance, text, evidence }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub candidate: String,
    pub total: f64,
    pub competence: f64,
    pub context_adjustment: f64,
    pub gate: GateResult,
    pub rationale: Vec<RationaleLine>,
    pub uncertainty: f64,
    pub dimension_scores: BTreeMap<String, f64>,
}

/// Proficiency at or above which a dimension is listed as a strength.
const STRENGTH: f64 = 0.75;
/// Proficiency at or below which a dimension is listed as a weakness.
const WEAKNESS: f64 = 0.45;

fn as_of(snapshot: &MirrorGraph) -> Timestamp {
    snapshot.clock().unwrap_or(chrono::DateTime::UNIX_EPOCH)
}

fn evidence_ids(snapshot: &MirrorGraph, node: NodeId) -> Vec<EvidenceId> {
    snapshot
        .node(node)
        .map(|n| n.evidence.iter().map(|ev| ev.id).collect())
        .unwrap_or_default()
}

fn confidence(snapshot: &MirrorGraph, node: NodeId) -> f64 {
    snapshot.effective_confidence(node, as_of(snapshot)).unwrap_or(0.0)
}

/// Apply the ethical gate to one candidate.
///
/// Looks at candidate-tagged constructs with a contradiction edge into the
/// values layer and takes the most confident one. `context_free` never
/// consults the graph and always passes.
pub fn ethical_gate(snapshot: &MirrorGraph, candidate: &str, threshold: f64, mode: Mode) -> GateResult {
    if mode == Mode::ContextFree {
        return GateResult::Passed;
    }
    let worst = snapshot
        .nodes()
        .filter(|n| n.kind == NodeKind::Construct && n.subject() == Some(candidate))
        .filter_map(|n| {
            let value = snapshot.outgoing(n.id).find_map(|e| {
                let target = snapshot.node(e.to)?;
                (e.relation == Relation::Contradiction && target.layer == Layer::Values).then_some(target)
            })?;
            Some((confidence(snapshot, n.id), n, value))
        })
        .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.id.cmp(&a.1.id)));

    let Some((conf, node, value)) = worst else {
        return GateResult::Passed;
    };
    let evidence = evidence_ids(snapshot, node.id);
    if conf > 0.0 && conf >= threshold {
        GateResult::Disqualified {
            reason: format!(
                "`{}` contradicts value `{}` with confidence {conf:.3} >= {threshold:.3}",
                node.label, value.label
            ),
            confidence: conf,
            node: node.id,
            evidence,
        }
    } else if conf > 0.0 {
        GateResult::Warned {
            confidence: conf,
            node: node.id,
            evidence,
        }
    } else {
        GateResult::Passed
    }
}

/// Weighted competence: group weights over within-group normalized dimension weights.
///
/// Groups the framework does not use are dropped and the remaining group
/// weights renormalized, so full proficiency everywhere scores exactly 1.
pub fn competence(profile: &CandidateProfile, framework: &CompetencyFramework, config: &EpisodeConfig) -> f64 {
    let groups = framework.groups();
    let present: f64 = groups
        .iter()
        .map(|g| config.dimension_group_weights.get(g).copied().unwrap_or(0.0))
        .sum();
    if present <= 0.0 {
        return 0.0;
    }
    let total: f64 = groups
        .iter()
        .map(|&g| {
            let gw = config.dimension_group_weights.get(&g).copied().unwrap_or(0.0) / present;
            let (num, den) = framework.in_group(g).fold((0.0, 0.0), |(num, den), d| {
                let p = profile.attributes.get(&d.id).copied().unwrap_or(0.0);
                (num + d.weight * p, den + d.weight)
            });
            if den > 0.0 {
                gw * num / den
            } else {
                0.0
            }
        })
        .sum();
    total.clamp(0.0, 1.0)
}

struct ContextTerm {
    node: NodeId,
    label: String,
    target: String,
    relation: Relation,
    value: f64,
    confidence: f64,
}

/// Signed, edge-weighted confidence of each candidate-tagged construct
/// pointing into the values or objectives layers. Contradictions into the
/// values layer are left to the gate.
fn context_terms(snapshot: &MirrorGraph, candidate: &str) -> Vec<ContextTerm> {
    let mut terms = Vec::new();
    for node in snapshot.nodes().filter(|n| n.subject() == Some(candidate)) {
        let conf = confidence(snapshot, node.id);
        for edge in snapshot.outgoing(node.id) {
            let Some(target) = snapshot.node(edge.to) else { continue };
            if !matches!(target.layer, Layer::Values | Layer::Objectives) {
                continue;
            }
            let sign = match (edge.relation, target.layer) {
                (Relation::Contradiction, Layer::Values) => continue,
                (Relation::Contradiction, _) => -1.0,
                _ => 1.0,
            };
            terms.push(ContextTerm {
                node: node.id,
                label: node.label.clone(),
                target: target.label.clone(),
                relation: edge.relation,
                value: sign * edge.weight * conf,
                confidence: conf,
            });
        }
    }
    terms
}

pub fn score_candidate(
    snapshot: &MirrorGraph,
    profile: &CandidateProfile,
    framework: &CompetencyFramework,
    config: &EpisodeConfig,
) -> Result<ScoreCard> {
    if let Some(unknown) = profile.attributes.keys().find(|d| framework.dimension(d).is_none()) {
        return Err(EpisodeError::UnknownDimension {
            candidate: profile.id.clone(),
            dimension: unknown.clone(),
        });
    }
    let dimension_scores: BTreeMap<String, f64> = framework
        .dimensions()
        .iter()
        .map(|d| (d.id.clone(), profile.attributes.get(&d.id).copied().unwrap_or(0.0)))
        .collect();
    let competence = competence(profile, framework, config);

    let mut rationale = Vec::new();
    let mut ranked_dims: Vec<_> = framework.dimensions().iter().collect();
    ranked_dims.sort_by(|a, b| {
        dimension_scores[&b.id]
            .total_cmp(&dimension_scores[&a.id])
            .then_with(|| a.id.cmp(&b.id))
    });
    for d in &ranked_dims {
        let p = dimension_scores[&d.id];
        if p >= STRENGTH {
            rationale.push(RationaleLine::new(
                Stance::Pro,
                format!("{} {:.2} ({}, weight {:.3})", d.label, p, d.group, d.weight),
                vec![],
            ));
        }
    }
    for d in ranked_dims.iter().rev() {
        let p = dimension_scores[&d.id];
        if p <= WEAKNESS {
            rationale.push(RationaleLine::new(
                Stance::Con,
                format!("{} {:.2} ({}, weight {:.3})", d.label, p, d.group, d.weight),
                vec![],
            ));
        }
    }

    let mut context_adjustment = 0.0;
    let mut cited: BTreeSet<NodeId> = BTreeSet::new();
    let gate = ethical_gate(snapshot, &profile.id, config.ethical_gate_threshold, config.mode);

    if config.mode == Mode::ContextRich {
        let terms = context_terms(snapshot, &profile.id);
        // `+ 0.0` turns the empty sum (-0.0) into 0.0.
        let raw: f64 = (terms.iter().map(|t| t.value).sum::<f64>() + 0.0) * config.context_scale;
        let bounded = raw.clamp(-config.max_context_adjustment, config.max_context_adjustment);
        context_adjustment = bounded.clamp(-competence, 1.0 - competence);
        for term in terms.iter().filter(|t| t.value != 0.0) {
            cited.insert(term.node);
            let stance = if term.value > 0.0 { Stance::Pro } else { Stance::Con };
            rationale.push(RationaleLine::new(
                stance,
                format!(
                    "context: `{}` {} `{}` (confidence {:.3}, contribution {:+.4})",
                    term.label,
                    term.relation,
                    term.target,
                    term.confidence,
                    term.value * config.context_scale
                ),
                evidence_ids(snapshot, term.node),
            ));
        }
        match &gate {
            GateResult::Disqualified { reason, node, evidence, .. } => {
                cited.insert(*node);
                rationale.push(RationaleLine::new(Stance::Con, format!("disqualified: {reason}"), evidence.clone()));
            }
            GateResult::Warned { confidence, node, evidence } => {
                cited.insert(*node);
                let label = snapshot.node(*node).map_or("?", |n| n.label.as_str());
                rationale.push(RationaleLine::new(
                    Stance::Note,
                    format!("warning: `{label}` below gate threshold at confidence {confidence:.3}"),
                    evidence.clone(),
                ));
            }
            GateResult::Passed => {}
        }
    }

    let uncertainties: Vec<f64> = cited
        .iter()
        .filter_map(|&id| snapshot.node(id))
        .flat_map(|n| n.evidence.iter().map(|ev| ev.uncertainty))
        .collect();
    let uncertainty = if uncertainties.is_empty() {
        0.0
    } else {
        uncertainties.iter().sum::<f64>() / uncertainties.len() as f64
    };

    Ok(ScoreCard {
        candidate: profile.id.clone(),
        total: (competence + context_adjustment).clamp(0.0, 1.0),
        competence,
        context_adjustment,
        gate,
        rationale,
        uncertainty,
        dimension_scores,
    })
}

/// Order score cards: eligible candidates by total descending then id
/// ascending, followed by disqualified candidates in id order.
pub fn rank_candidates(mut scorecards: Vec<ScoreCard>, _config: &EpisodeConfig) -> Result<Vec<ScoreCard>> {
    if scorecards.is_empty() {
        return Err(EpisodeError::EmptyPool);
    }
    scorecards.sort_by(|a, b| {
        a.gate
            .is_disqualified()
            .cmp(&b.gate.is_disqualified())
            .then_with(|| {
                if a.gate.is_disqualified() {
                    std::cmp::Ordering::Equal
                } else {
                    b.total.total_cmp(&a.total)
                }
            })
            .then_with(|| a.candidate.cmp(&b.candidate))
    });
    Ok(scorecards)
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeInputs {
    pub framework: CompetencyFramework,
    pub profiles: Vec<CandidateProfile>,
    #[serde(default)]
    pub signals: Option<SignalSummary>,
}

impl EpisodeInputs {
    pub fn digest(&self) -> String {
        digest_of(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    CollectSignals,
    UpdatePersona,
    ScoreOptions,
    AnticipateConsequences,
    PresentRecommendations,
}

impl Stage {
    pub const ORDER: [Stage; 5] = [
        Stage::CollectSignals,
        Stage::UpdatePersona,
        Stage::ScoreOptions,
        Stage::AnticipateConsequences,
        Stage::PresentRecommendations,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub step: u8,
    pub stage: Stage,
    pub summary: String,
    pub facts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredOption {
    pub option: String,
    pub total: f64,
    pub eligible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Short,
    Long,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskNote {
    pub horizon: Horizon,
    pub option: String,
    pub note: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<EvidenceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub rank: usize,
    pub candidate: String,
    pub total: f64,
    pub gate: GateResult,
    pub rationale: Vec<RationaleLine>,
    pub uncertainty: f64,
    pub competence: f64,
    pub context_adjustment: f64,
    pub dimension_scores: BTreeMap<String, f64>,
}

impl RankingRow {
    fn new(rank: usize, card: ScoreCard) -> Self {
        Self {
            rank,
            candidate: card.candidate,
            total: card.total,
            gate: card.gate,
            rationale: card.rationale,
            uncertainty: card.uncertainty,
            competence: card.competence,
            context_adjustment: card.context_adjustment,
            dimension_scores: card.dimension_scores,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    SnapshotVersion,
    SnapshotHash,
    InputsDigest,
    ConfigDigest,
    Seed,
    History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub kind: AuditKind,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEpisode {
    pub id: String,
    pub mode: Mode,
    pub snapshot_version: u64,
    pub as_of: Option<Timestamp>,
    pub stages: Vec<StageRecord>,
    pub options: Vec<ScoredOption>,
    pub ranking: Vec<RankingRow>,
    pub recommendation: String,
    pub risks: Vec<RiskNote>,
    pub conflicts: BTreeSet<NodeId>,
    pub oversight: Vec<MetaAction>,
    pub proposals: Vec<UpdateProposal>,
    audit: Vec<AuditEntry>,
}

impl DecisionEpisode {
    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    /// Ranking as an evaluation: eligible candidates in order, disqualified ones excluded.
    pub fn to_evaluation(&self) -> Evaluation {
        let (excluded, ranked): (Vec<&RankingRow>, Vec<&RankingRow>) =
            self.ranking.iter().partition(|row| row.gate.is_disqualified());
        Evaluation {
            evaluator: self.mode.to_string(),
            ranked: ranked.into_iter().map(|r| r.candidate.clone()).collect(),
            excluded: excluded.into_iter().map(|r| r.candidate.clone()).collect(),
        }
    }

    pub fn position_of(&self, candidate: &str) -> Option<usize> {
        self.ranking.iter().find(|r| r.candidate == candidate).map(|r| r.rank)
    }

    /// Stable-field-order interchange document.
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("episode serializes")
    }

    /// Digest of the canonical form, excluding the id.
    pub fn content_digest(&self) -> String {
        let mut body = self.clone();
        body.id = String::new();
        digest_of(&body)
    }
}

/// Reject an episode computed on a snapshot that is no longer the latest.
pub fn ensure_current(episode_version: u64, latest: u64) -> Result<()> {
    if episode_version == latest {
        Ok(())
    } else {
        Err(EpisodeError::SnapshotStale {
            episode: episode_version,
            latest,
        })
    }
}

fn facts<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Run one five-step episode. A pure function of snapshot, inputs, config and history.
pub fn run_episode(
    snapshot: &MirrorGraph,
    inputs: &EpisodeInputs,
    config: &EpisodeConfig,
    history: &[DecisionEpisode],
) -> Result<DecisionEpisode> {
    config.validate()?;
    if inputs.profiles.is_empty() {
        return Err(EpisodeError::EmptyPool);
    }
    let rich = config.mode == Mode::ContextRich;
    let as_of = snapshot.clock();
    let mut stages = Vec::with_capacity(5);

    // (i) collect and time-align
    let signals = inputs.signals.clone().unwrap_or_default();
    let latest_error = signals.errors.last().map(|&(_, e)| e);
    stages.push(StageRecord {
        step: 1,
        stage: Stage::CollectSignals,
        summary: format!(
            "aligned {} profiles against {} dimensions at snapshot v{}",
            inputs.profiles.len(),
            inputs.framework.dimensions().len(),
            snapshot.version()
        ),
        facts: facts([
            ("as_of", as_of.map_or_else(|| "none".to_string(), |t| t.to_rfc3339())),
            ("signal_errors", signals.errors.len().to_string()),
            (
                "latest_error",
                latest_error.map_or_else(|| "none".to_string(), |e| format!("{e:.6}")),
            ),
        ]),
    });

    // (ii) persona state
    let (conflicts, oversight, proposals) = if rich {
        let conflicts: BTreeSet<NodeId> = detect_conflicts(snapshot, config.conflict_threshold)
            .iter()
            .map(|c| c.node)
            .collect();
        let proposals = propose_updates(snapshot, &signals.errors, &signals.context, &config.synapse);
        let oversight = metacognitive_review(snapshot, history, &proposals, config);
        (conflicts, oversight, proposals)
    } else {
        (BTreeSet::new(), Vec::new(), Vec::new())
    };
    let tagged = if rich {
        snapshot.nodes().filter(|n| n.subject().is_some()).count()
    } else {
        0
    };
    stages.push(StageRecord {
        step: 2,
        stage: Stage::UpdatePersona,
        summary: if rich {
            format!(
                "read {} candidate-tagged constructs; {} conflicted nodes; {} pending proposals",
                tagged,
                conflicts.len(),
                proposals.len()
            )
        } else {
            "graph withheld: scoring from profiles and framework only".to_string()
        },
        facts: facts([
            ("graph_access", rich.to_string()),
            ("tagged_constructs", tagged.to_string()),
            ("conflicts", conflicts.len().to_string()),
            ("proposals", proposals.len().to_string()),
        ]),
    });

    // (iii) score options, including inaction
    let cards = inputs
        .profiles
        .iter()
        .map(|p| score_candidate(snapshot, p, &inputs.framework, config))
        .collect::<Result<Vec<_>>>()?;
    let ranked = rank_candidates(cards, config)?;
    let mut options: Vec<ScoredOption> = ranked
        .iter()
        .map(|c| ScoredOption {
            option: c.candidate.clone(),
            total: c.total,
            eligible: !c.gate.is_disqualified(),
        })
        .collect();
    options.push(ScoredOption {
        option: NO_HIRE.to_string(),
        total: config.inaction_score,
        eligible: true,
    });
    let best = ranked.iter().find(|c| !c.gate.is_disqualified());
    let recommendation = match best {
        Some(c) if c.total >= config.inaction_score => c.candidate.clone(),
        _ => NO_HIRE.to_string(),
    };
    stages.push(StageRecord {
        step: 3,
        stage: Stage::ScoreOptions,
        summary: format!(
            "scored {} options ({} candidates + inaction); {} disqualified",
            options.len(),
            ranked.len(),
            ranked.iter().filter(|c| c.gate.is_disqualified()).count()
        ),
        facts: facts([
            ("options", options.len().to_string()),
            ("inaction_score", format!("{:.6}", config.inaction_score)),
        ]),
    });

    // (iv) rule-derived consequences
    let mut risks = Vec::new();
    for card in &ranked {
        match &card.gate {
            GateResult::Disqualified { evidence, .. } => {
                risks.push(RiskNote {
                    horizon: Horizon::Short,
                    option: card.candidate.clone(),
                    note: "hiring would override a values contradiction the organization holds with high confidence"
                        .into(),
                    evidence: evidence.clone(),
                });
                risks.push(RiskNote {
                    horizon: Horizon::Long,
                    option: card.candidate.clone(),
                    note: "renewed trust erosion within the existing team".into(),
                    evidence: evidence.clone(),
                });
            }
            GateResult::Warned { evidence, confidence, .. } => risks.push(RiskNote {
                horizon: Horizon::Long,
                option: card.candidate.clone(),
                note: format!("unresolved values concern at confidence {confidence:.3}; gather more evidence"),
                evidence: evidence.clone(),
            }),
            GateResult::Passed => {}
        }
        if card.uncertainty > 0.3 {
            risks.push(RiskNote {
                horizon: Horizon::Short,
                option: card.candidate.clone(),
                note: format!("context evidence is uncertain ({:.3})", card.uncertainty),
                evidence: vec![],
            });
        }
    }
    if let Some(best) = best {
        let margin = best.total - config.inaction_score;
        if margin < 0.05 {
            risks.push(RiskNote {
                horizon: Horizon::Short,
                option: NO_HIRE.to_string(),
                note: format!("best candidate beats inaction by only {margin:.3}"),
                evidence: vec![],
            });
        }
    }
    stages.push(StageRecord {
        step: 4,
        stage: Stage::AnticipateConsequences,
        summary: format!("{} risk notes", risks.len()),
        facts: facts([
            ("short", risks.iter().filter(|r| r.horizon == Horizon::Short).count().to_string()),
            ("long", risks.iter().filter(|r| r.horizon == Horizon::Long).count().to_string()),
        ]),
    });

    // (v) present
    let ranking: Vec<RankingRow> = ranked
        .into_iter()
        .enumerate()
        .map(|(i, card)| RankingRow::new(i + 1, card))
        .collect();
    stages.push(StageRecord {
        step: 5,
        stage: Stage::PresentRecommendations,
        summary: format!("recommend {recommendation}"),
        facts: facts([
            ("recommendation", recommendation.clone()),
            ("ranked", ranking.len().to_string()),
            ("escalations", oversight.iter().filter(|a| a.is_escalation()).count().to_string()),
        ]),
    });

    let history_ids: Vec<&str> = history.iter().map(|e| e.id.as_str()).collect();
    let audit = vec![
        AuditEntry {
            kind: AuditKind::SnapshotVersion,
            value: snapshot.version().to_string(),
        },
        AuditEntry {
            kind: AuditKind::SnapshotHash,
            value: snapshot.snapshot_hash(),
        },
        AuditEntry {
            kind: AuditKind::InputsDigest,
            value: inputs.digest(),
        },
        AuditEntry {
            kind: AuditKind::ConfigDigest,
            value: config.digest(),
        },
        AuditEntry {
            kind: AuditKind::Seed,
            value: config.seed.to_string(),
        },
        AuditEntry {
            kind: AuditKind::History,
            value: canonical_json(&history_ids),
        },
    ];

    let mut episode = DecisionEpisode {
        id: String::new(),
        mode: config.mode,
        snapshot_version: snapshot.version(),
        as_of,
        stages,
        options,
        ranking,
        recommendation,
        risks,
        conflicts,
        oversight,
        proposals,
        audit,
    };
    episode.id = episode.content_digest();
    debug_assert_eq!(episode.stages.len(), 5);
    Ok(episode)
}

#[cfg(test)]
mod tests;
