//! The bundled ten-candidate hiring scenario.
//!
//! The raw documents are compiled in, so tests, the CLI and the service all
//! see the same bytes. See `fixtures/README.md` for how they were authored.

use std::collections::BTreeSet;

use crate::episode::EpisodeInputs;
use crate::fit::Evaluation;
use crate::graph::{MirrorGraph, NodeId};
use crate::ingest::{self, CandidateProfile, CompetencyFramework, IngestOptions, IngestReport};
use crate::synapse::{SignalSummary, SignalWindow, SynapseConfig};

pub const FRAMEWORK: &str = include_str!("../fixtures/framework.json");
pub const PROFILES: &str = include_str!("../fixtures/profiles.jsonl");
pub const EVENTS: &str = include_str!("../fixtures/events.jsonl");
pub const CONFLICT_EVENTS: &str = include_str!("../fixtures/conflict_events.jsonl");
pub const EVALUATIONS: &str = include_str!("../fixtures/evaluations.json");
pub const SIGNALS: &str = include_str!("../fixtures/signals.csv");

/// Persona the fixture graph mirrors.
pub const OWNER: &str = "ceo";
/// Candidate whose trust-breach construct trips the ethical gate.
pub const GATED_CANDIDATE: &str = "candidate_G";
pub const TRUST_BREACH_LABEL: &str = "trust_breach:candidate_G";
/// Construct carrying the split evidence in the conflict fixture.
pub const CONFLICT_LABEL: &str = "ownership_independence:candidate_J";

pub fn framework() -> CompetencyFramework {
    ingest::load_framework(FRAMEWORK).expect("bundled framework is valid")
}

pub fn profiles() -> Vec<CandidateProfile> {
    ingest::load_profiles(PROFILES).expect("bundled profiles are valid")
}

pub fn inputs() -> EpisodeInputs {
    EpisodeInputs {
        framework: framework(),
        profiles: profiles(),
        signals: None,
    }
}

fn replay(events: &str) -> (MirrorGraph, IngestReport) {
    let mut graph = MirrorGraph::new(OWNER);
    let report = ingest::ingest_log(&mut graph, events, IngestOptions::strict()).expect("bundled events ingest cleanly");
    (graph, report)
}

/// The context graph: onboarding plus every candidate-tagged observation.
pub fn context_graph() -> MirrorGraph {
    replay(EVENTS).0
}

pub fn context_graph_with_report() -> (MirrorGraph, IngestReport) {
    replay(EVENTS)
}

/// A graph holding a single construct with conflicting evidence.
pub fn conflict_graph() -> MirrorGraph {
    replay(CONFLICT_EVENTS).0
}

pub fn evaluations() -> Vec<Evaluation> {
    let evals: Vec<Evaluation> = serde_json::from_str(EVALUATIONS).expect("bundled evaluations parse");
    for e in &evals {
        e.validate().expect("bundled evaluations are well formed");
    }
    evals
}

/// Look up a bundled evaluation by evaluator name (`ceo`, `cto`, `cso`, ...).
pub fn evaluation(evaluator: &str) -> Option<Evaluation> {
    evaluations().into_iter().find(|e| e.evaluator == evaluator)
}

/// Signal windows, split on blank lines; each block carries its own header.
pub fn signal_windows() -> Vec<SignalWindow> {
    SIGNALS
        .split("\n\n")
        .filter(|block| !block.trim().is_empty())
        .map(|block| SignalWindow::from_csv(block).expect("bundled signal window parses"))
        .collect()
}

/// Summary of the bundled windows with `context` as the nodes in focus.
pub fn signal_summary(context: BTreeSet<NodeId>, config: &SynapseConfig) -> SignalSummary {
    SignalSummary::from_windows(&signal_windows(), context, config).expect("bundled windows encode")
}
