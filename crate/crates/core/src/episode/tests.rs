use chrono::{Duration, TimeZone, Utc};

use super::*;
use crate::graph::{NewEvidence, NodeKey, Polarity};
use crate::synapse::{ProposalKind, ProposalStatus, ProposalTarget, REGIME_KEY};

fn t0() -> Timestamp {
    Utc.with_ymd_and_hms(2025, 5, 1, 9, 0, 0).unwrap()
}

fn framework() -> CompetencyFramework {
    CompetencyFramework::new(vec![
        ("depth".into(), DimensionGroup::Knowledge, "Depth".into(), Some(2.0)),
        ("breadth".into(), DimensionGroup::Knowledge, "Breadth".into(), Some(1.0)),
        ("build".into(), DimensionGroup::Technical, "Build".into(), None),
        ("talk".into(), DimensionGroup::SoftSkills, "Talk".into(), None),
        ("ethics".into(), DimensionGroup::OrgCultureFit, "Ethics".into(), None),
    ])
    .unwrap()
}

fn profile(id: &str, p: [f64; 5]) -> CandidateProfile {
    let dims = ["depth", "breadth", "build", "talk", "ethics"];
    CandidateProfile {
        id: id.into(),
        attributes: dims.iter().map(|d| d.to_string()).zip(p).collect(),
        tags: Default::default(),
        dossier: String::new(),
    }
}

fn pool() -> Vec<CandidateProfile> {
    vec![
        profile("candidate_A", [0.6, 0.6, 0.6, 0.6, 0.6]),
        profile("candidate_B", [0.9, 0.9, 0.9, 0.9, 0.9]),
        profile("candidate_C", [0.5, 0.5, 0.5, 0.5, 0.5]),
    ]
}

fn inputs() -> EpisodeInputs {
    EpisodeInputs {
        framework: framework(),
        profiles: pool(),
        signals: None,
    }
}

/// Graph in which candidate B contradicts a held value with confidence `r * (1 - u)`.
fn graph_with_breach(reliability: f64, uncertainty: f64) -> (MirrorGraph, EvidenceId) {
    let mut g = MirrorGraph::new("ceo");
    g.advance_clock(t0());
    let value = g.upsert_node(&NodeKey::new(Layer::Values, NodeKind::Value, "integrity")).unwrap();
    let goal = g
        .upsert_node(&NodeKey::new(Layer::Objectives, NodeKind::Construct, "ship"))
        .unwrap();
    let breach = g
        .upsert_node(&NodeKey::new(Layer::Social, NodeKind::Construct, "breach:candidate_B"))
        .unwrap();
    let fit = g
        .upsert_node(&NodeKey::new(Layer::Social, NodeKind::Construct, "fit:candidate_C"))
        .unwrap();
    g.add_edge(breach, value, Relation::Contradiction, 0.9).unwrap();
    g.add_edge(fit, goal, Relation::Amplification, 0.8).unwrap();
    let ev = g
        .attach_evidence(
            breach,
            NewEvidence::new("ceo", t0(), reliability, uncertainty).polarity(Polarity::Contradicts),
        )
        .unwrap();
    g.attach_evidence(fit, NewEvidence::new("cto", t0(), 1.0, 0.0)).unwrap();
    (g, ev)
}

#[test]
fn competence_normalizes_within_and_across_groups() {
    let fw = framework();
    let cfg = EpisodeConfig::default();
    assert!((competence(&profile("x", [1.0; 5]), &fw, &cfg) - 1.0).abs() < 1e-12);
    assert_eq!(competence(&profile("x", [0.0; 5]), &fw, &cfg), 0.0);

    // knowledge: (2*0.9 + 1*0.3)/3 = 0.7
    let p = profile("x", [0.9, 0.3, 0.5, 0.4, 0.8]);
    let expected = 0.35 * 0.7 + 0.30 * 0.5 + 0.20 * 0.4 + 0.15 * 0.8;
    assert!((competence(&p, &fw, &cfg) - expected).abs() < 1e-12);
}

#[test]
fn competence_renormalizes_over_groups_in_use() {
    let fw = CompetencyFramework::new(vec![
        ("a".into(), DimensionGroup::Knowledge, "A".into(), None),
        ("b".into(), DimensionGroup::Technical, "B".into(), None),
    ])
    .unwrap();
    let p = CandidateProfile {
        id: "x".into(),
        attributes: [("a".to_string(), 1.0), ("b".to_string(), 0.0)].into(),
        tags: Default::default(),
        dossier: String::new(),
    };
    let c = competence(&p, &fw, &EpisodeConfig::default());
    assert!((c - 0.35 / 0.65).abs() < 1e-12);
}

#[test]
fn unknown_dimension_is_rejected() {
    let mut p = profile("candidate_Z", [0.5; 5]);
    p.attributes.insert("charisma".into(), 0.9);
    let err = score_candidate(&MirrorGraph::new("x"), &p, &framework(), &EpisodeConfig::default()).unwrap_err();
    assert!(matches!(err, EpisodeError::UnknownDimension { .. }));
}

#[test]
fn gate_disqualifies_at_threshold_and_warns_below() {
    let (g, ev) = graph_with_breach(0.95, 0.05);
    let gate = ethical_gate(&g, "candidate_B", 0.7, Mode::ContextRich);
    match gate {
        GateResult::Disqualified { confidence, evidence, .. } => {
            assert!((confidence - 0.9025).abs() < 1e-9);
            assert_eq!(evidence, vec![ev]);
        }
        other => panic!("expected disqualification, got {other:?}"),
    }
    assert!(matches!(
        ethical_gate(&g, "candidate_B", 0.95, Mode::ContextRich),
        GateResult::Warned { .. }
    ));
    assert!(ethical_gate(&g, "candidate_B", 0.9025, Mode::ContextRich).is_disqualified());
    assert_eq!(ethical_gate(&g, "candidate_B", 0.7, Mode::ContextFree), GateResult::Passed);
    assert_eq!(ethical_gate(&g, "candidate_A", 0.7, Mode::ContextRich), GateResult::Passed);
}

#[test]
fn zero_confidence_never_disqualifies() {
    let (g, _) = graph_with_breach(0.0, 0.0);
    assert_eq!(ethical_gate(&g, "candidate_B", 0.0, Mode::ContextRich), GateResult::Passed);
}

#[test]
fn context_adjustment_is_bounded_and_cited() {
    let (g, _) = graph_with_breach(0.95, 0.05);
    let cfg = EpisodeConfig::default();
    let card = score_candidate(&g, &pool()[2], &framework(), &cfg).unwrap();
    // 0.8 edge weight * 1.0 confidence * 0.25 scale
    assert!((card.context_adjustment - 0.2).abs() < 1e-12);
    assert!((card.total - 0.7).abs() < 1e-12);
    assert!(card.rationale.iter().any(|l| l.stance == Stance::Pro && l.text.contains("fit:candidate_C")));

    let tight = EpisodeConfig {
        max_context_adjustment: 0.05,
        ..EpisodeConfig::default()
    };
    let card = score_candidate(&g, &pool()[2], &framework(), &tight).unwrap();
    assert!((card.context_adjustment - 0.05).abs() < 1e-12);
}

#[test]
fn disqualified_rank_last_regardless_of_score() {
    let (g, _) = graph_with_breach(0.95, 0.05);
    let ep = run_episode(&g, &inputs(), &EpisodeConfig::default(), &[]).unwrap();
    let order: Vec<&str> = ep.ranking.iter().map(|r| r.candidate.as_str()).collect();
    assert_eq!(order, ["candidate_C", "candidate_A", "candidate_B"]);
    assert_eq!(ep.recommendation, "candidate_C");
    let eval = ep.to_evaluation();
    assert_eq!(eval.excluded, ["candidate_B".to_string()].into());
    assert!(ep.risks.iter().any(|r| r.option == "candidate_B" && r.horizon == Horizon::Long));
}

#[test]
fn context_free_ignores_the_graph() {
    let (g, _) = graph_with_breach(0.95, 0.05);
    let cfg = EpisodeConfig::default().with_mode(Mode::ContextFree);
    let with_graph = run_episode(&g, &inputs(), &cfg, &[]).unwrap();
    let without = run_episode(&MirrorGraph::new("ceo"), &inputs(), &cfg, &[]).unwrap();
    let order = |e: &DecisionEpisode| e.ranking.iter().map(|r| (r.candidate.clone(), r.total)).collect::<Vec<_>>();
    assert_eq!(order(&with_graph), order(&without));
    assert_eq!(with_graph.ranking[0].candidate, "candidate_B");
    assert!(with_graph.ranking.iter().all(|r| r.context_adjustment == 0.0));
}

#[test]
fn ties_break_by_candidate_id() {
    let mut inputs = inputs();
    inputs.profiles = vec![profile("candidate_Q", [0.5; 5]), profile("candidate_P", [0.5; 5])];
    let ep = run_episode(&MirrorGraph::new("x"), &inputs, &EpisodeConfig::default(), &[]).unwrap();
    assert_eq!(ep.ranking[0].candidate, "candidate_P");
}

#[test]
fn episode_has_five_ordered_stages_and_inaction() {
    let (g, _) = graph_with_breach(0.95, 0.05);
    let ep = run_episode(&g, &inputs(), &EpisodeConfig::default(), &[]).unwrap();
    let stages: Vec<Stage> = ep.stages.iter().map(|s| s.stage).collect();
    assert_eq!(stages, Stage::ORDER);
    assert_eq!(ep.stages.iter().map(|s| s.step).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
    assert!(ep.options.iter().any(|o| o.option == NO_HIRE));
    assert_eq!(ep.id, ep.content_digest());
    assert_eq!(ep.audit().len(), 6);
}

#[test]
fn inaction_wins_when_everyone_is_weak() {
    let mut inputs = inputs();
    inputs.profiles = vec![profile("candidate_W", [0.1; 5])];
    let ep = run_episode(&MirrorGraph::new("x"), &inputs, &EpisodeConfig::default(), &[]).unwrap();
    assert_eq!(ep.recommendation, NO_HIRE);
}

#[test]
fn episodes_are_deterministic() {
    let (g, _) = graph_with_breach(0.95, 0.05);
    let a = run_episode(&g, &inputs(), &EpisodeConfig::default(), &[]).unwrap();
    let b = run_episode(&g.clone(), &inputs(), &EpisodeConfig::default(), &[]).unwrap();
    assert_eq!(a.to_document(), b.to_document());
    let other_seed = EpisodeConfig {
        seed: 7,
        ..EpisodeConfig::default()
    };
    let c = run_episode(&g, &inputs(), &other_seed, &[]).unwrap();
    assert_ne!(a.id, c.id, "the seed is part of the audited inputs");
}

#[test]
fn document_round_trips() {
    let (g, _) = graph_with_breach(0.95, 0.05);
    let ep = run_episode(&g, &inputs(), &EpisodeConfig::default(), &[]).unwrap();
    let back: DecisionEpisode = serde_json::from_str(&ep.to_document()).unwrap();
    assert_eq!(back, ep);
}

#[test]
fn stale_snapshots_are_refused() {
    assert!(ensure_current(3, 3).is_ok());
    assert_eq!(
        ensure_current(2, 3),
        Err(EpisodeError::SnapshotStale { episode: 2, latest: 3 })
    );
}

#[test]
fn empty_pool_and_bad_config_fail() {
    let mut empty = inputs();
    empty.profiles.clear();
    assert_eq!(
        run_episode(&MirrorGraph::new("x"), &empty, &EpisodeConfig::default(), &[]),
        Err(EpisodeError::EmptyPool)
    );
    let bad = EpisodeConfig {
        ethical_gate_threshold: 1.5,
        ..EpisodeConfig::default()
    };
    assert!(matches!(
        run_episode(&MirrorGraph::new("x"), &inputs(), &bad, &[]),
        Err(EpisodeError::InvalidConfig(_))
    ));
}

// ---------------------------------------------------------------------------
// Oversight
// ---------------------------------------------------------------------------

/// A node with supporting evidence at 0.6 and contradicting evidence at 0.5.
fn conflicted_graph() -> (MirrorGraph, NodeId, EvidenceId, EvidenceId) {
    let mut g = MirrorGraph::new("ceo");
    g.advance_clock(t0());
    let n = g
        .upsert_node(&NodeKey::new(Layer::Social, NodeKind::Construct, "independence:candidate_A"))
        .unwrap();
    let pro = g.attach_evidence(n, NewEvidence::new("cto", t0(), 0.75, 0.2)).unwrap();
    let con = g
        .attach_evidence(
            n,
            NewEvidence::new("cso", t0(), 0.625, 0.2).polarity(Polarity::Contradicts),
        )
        .unwrap();
    (g, n, pro, con)
}

#[test]
fn conflict_is_detected_and_weaker_side_down_weighted() {
    let (g, n, _, con) = conflicted_graph();
    let conflicts = detect_conflicts(&g, 0.4);
    assert_eq!(conflicts.len(), 1);
    assert_eq!(conflicts[0].node, n);
    assert!((conflicts[0].support - 0.6).abs() < 1e-12);
    assert!((conflicts[0].contradiction - 0.5).abs() < 1e-12);
    assert_eq!(conflicts[0].weaker, Polarity::Contradicts);

    let actions = metacognitive_review(&g, &[], &[], &EpisodeConfig::default());
    assert_eq!(
        actions.iter().map(|a| a.kind.clone()).collect::<Vec<_>>(),
        vec![
            MetaActionKind::DownWeight { evidence: con, factor: 0.5 },
            MetaActionKind::RequestEvidence { node: n },
        ]
    );
    assert!(detect_conflicts(&g, 0.55).is_empty());
}

#[test]
fn persistent_conflict_escalates_on_second_episode() {
    let (g, _, _, _) = conflicted_graph();
    let mut inputs = inputs();
    inputs.profiles.truncate(1);
    let cfg = EpisodeConfig::default();
    let first = run_episode(&g, &inputs, &cfg, &[]).unwrap();
    assert!(!first.oversight.iter().any(MetaAction::is_escalation));
    let second = run_episode(&g, &inputs, &cfg, std::slice::from_ref(&first)).unwrap();
    assert_eq!(second.oversight.iter().filter(|a| a.is_escalation()).count(), 1);
    assert_ne!(first.id, second.id);
}

// ---------------------------------------------------------------------------
// Co-evolution
// ---------------------------------------------------------------------------

fn proposal(kind: ProposalKind, target: ProposalTarget, magnitude: f64) -> UpdateProposal {
    UpdateProposal::new(kind, target, magnitude, "test", t0())
}

#[test]
fn nothing_applies_without_a_decision() {
    let (mut g, n, _, _) = conflicted_graph();
    let mut cfg = GovernedConfig::new(EpisodeConfig::default());
    let mut book = ProposalBook::default();
    book.submit(proposal(ProposalKind::RaiseUncertainty, ProposalTarget::Node(n), 0.1));
    let before = g.clone();
    let out = coevolution_step(&mut g, &mut cfg, &mut book, None, &[]).unwrap();
    assert!(out.applied.is_empty());
    assert_eq!(g, before);
    assert_eq!(cfg.version, 0);
    assert_eq!(book.pending().count(), 1);
}

#[test]
fn approval_applies_and_versions_rejection_archives() {
    let (mut g, n, _, _) = conflicted_graph();
    let mut cfg = GovernedConfig::new(EpisodeConfig::default());
    let mut book = ProposalBook::default();
    let raise = proposal(ProposalKind::RaiseUncertainty, ProposalTarget::Node(n), 0.1);
    let regime = proposal(ProposalKind::RegimeShift, ProposalTarget::Config(REGIME_KEY.into()), 0.8);
    let threshold = proposal(
        ProposalKind::AdjustThreshold,
        ProposalTarget::Config("ethical_gate_threshold".into()),
        0.8,
    );
    for p in [&raise, &regime, &threshold] {
        assert!(book.submit(p.clone()));
    }
    assert!(!book.submit(raise.clone()), "duplicate ids are ignored");
    let conf_before = g.effective_confidence(n, t0()).unwrap();

    let decisions = [
        Decision { proposal: raise.id.clone(), approve: true, actor: "ceo".into(), rationale: String::new() },
        Decision { proposal: regime.id.clone(), approve: false, actor: "ceo".into(), rationale: String::new() },
        Decision { proposal: threshold.id.clone(), approve: true, actor: "ceo".into(), rationale: String::new() },
    ];
    let out = coevolution_step(&mut g, &mut cfg, &mut book, None, &decisions).unwrap();
    assert_eq!(out.applied.len(), 2);
    assert_eq!(out.archived, vec![regime.id.clone()]);
    assert_eq!(cfg.version, 2);
    assert_eq!(cfg.regime_epoch, 0);
    assert_eq!(cfg.config.ethical_gate_threshold, 0.8);
    assert!(g.effective_confidence(n, t0()).unwrap() < conf_before);
    assert_eq!(book.get(&regime.id).unwrap().status, ProposalStatus::Rejected);
    assert_eq!(book.archived().count(), 1);

    let again = [Decision { proposal: raise.id.clone(), approve: false, actor: String::new(), rationale: String::new() }];
    assert_eq!(
        coevolution_step(&mut g, &mut cfg, &mut book, None, &again),
        Err(EpisodeError::AlreadyDecided(raise.id.clone()))
    );
}

#[test]
fn failed_step_changes_nothing() {
    let (mut g, n, _, _) = conflicted_graph();
    let mut cfg = GovernedConfig::new(EpisodeConfig::default());
    let mut book = ProposalBook::default();
    let ok = proposal(ProposalKind::RaiseUncertainty, ProposalTarget::Node(n), 0.1);
    let bad = proposal(
        ProposalKind::AdjustThreshold,
        ProposalTarget::Config("no_such_knob".into()),
        0.5,
    );
    book.submit(ok.clone());
    book.submit(bad.clone());
    let (g0, c0, b0) = (g.clone(), cfg.clone(), book.clone());
    let decisions = [
        Decision { proposal: ok.id, approve: true, actor: String::new(), rationale: String::new() },
        Decision { proposal: bad.id, approve: true, actor: String::new(), rationale: String::new() },
    ];
    assert!(matches!(
        coevolution_step(&mut g, &mut cfg, &mut book, None, &decisions),
        Err(EpisodeError::InvalidProposal { .. })
    ));
    assert_eq!((g, cfg, book), (g0, c0, b0));

    let mut g = MirrorGraph::new("x");
    let mut cfg = GovernedConfig::new(EpisodeConfig::default());
    let mut book = ProposalBook::default();
    let unknown = [Decision { proposal: "nope".into(), approve: true, actor: String::new(), rationale: String::new() }];
    assert_eq!(
        coevolution_step(&mut g, &mut cfg, &mut book, None, &unknown),
        Err(EpisodeError::UnknownProposal("nope".into()))
    );
}

#[test]
fn new_statistics_register_pending_proposals() {
    let (mut g, n, _, _) = conflicted_graph();
    let mut cfg = GovernedConfig::new(EpisodeConfig::default());
    let mut book = ProposalBook::default();
    let stats = SignalSummary {
        latest: None,
        errors: (0..3).map(|i| (t0() + Duration::minutes(i), 0.9)).collect(),
        context: [n].into(),
    };
    let out = coevolution_step(&mut g, &mut cfg, &mut book, Some(&stats), &[]).unwrap();
    assert_eq!(out.new_proposals.len(), 2);
    assert!(book.pending().all(|p| p.status == ProposalStatus::Pending));
    let again = coevolution_step(&mut g, &mut cfg, &mut book, Some(&stats), &[]).unwrap();
    assert!(again.new_proposals.is_empty(), "same statistics raise the same ids once");
}
