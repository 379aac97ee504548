//! The HTTP surface, driven in-process through `tower::ServiceExt::oneshot`.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mirror_core::fixtures;
use mirror_service::{api, Service, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    _dir: tempfile::TempDir,
    service: Arc<Service>,
}

impl Harness {
    fn new(events: &[&str]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let service = Service::open(ServiceConfig::new(dir.path())).unwrap();
        for text in events {
            service.ingest(text, true).unwrap();
        }
        Self {
            _dir: dir,
            service: Arc::new(service),
        }
    }

    fn app(&self) -> Router {
        api::router(self.service.clone())
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let body = body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty);
        let request = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body)
            .unwrap();
        let response = self.app().oneshot(request).await.unwrap();
        let status = response.status();
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }
}

fn ranked(episode: &Value) -> Vec<String> {
    episode["ranking"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| row["candidate"].as_str().unwrap().trim_start_matches("candidate_").to_string())
        .collect()
}

#[tokio::test]
async fn health_reports_the_live_hash() {
    let h = Harness::new(&[fixtures::EVENTS]);
    let (status, body) = h.call("GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["snapshot_hash"], json!(fixtures::context_graph().snapshot_hash()));
    assert_eq!(body["log_entries"], json!(18));
}

#[tokio::test]
async fn episode_round_trip() {
    let h = Harness::new(&[fixtures::EVENTS]);
    let (status, episode) = h.call("POST", "/episodes", Some(json!({"mode": "context_rich"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(episode["stages"].as_array().unwrap().len(), 5);
    assert_eq!(ranked(&episode)[..3], ["D", "J", "B"]);
    assert_eq!(episode["recommendation"], json!("candidate_D"));

    let id = episode["id"].as_str().unwrap();
    let (status, view) = h.call("GET", &format!("/episodes/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["episode"], episode);
    assert_eq!(view["overrides"], json!([]));

    // Same log, same request, no prior history: byte-identical episode.
    let twin = Harness::new(&[fixtures::EVENTS]);
    let (_, again) = twin.call("POST", "/episodes", Some(json!({"mode": "context_rich"}))).await;
    assert_eq!(again, episode);

    let (_, free) = h.call("POST", "/episodes", Some(json!({"mode": "context_free"}))).await;
    assert_eq!(ranked(&free)[0], "G");
}

#[tokio::test]
async fn overrides_annotate_without_rewriting() {
    let h = Harness::new(&[fixtures::EVENTS]);
    let (_, episode) = h.call("POST", "/episodes", None).await;
    let id = episode["id"].as_str().unwrap().to_string();
    let uri = format!("/episodes/{id}/overrides");

    let first = json!({"actor": "ceo", "candidate": "candidate_J", "position": 1, "rationale": "stronger delivery record"});
    let second = json!({"actor": "cto", "rationale": "prefer a second interview round"});
    let (status, a) = h.call("POST", &uri, Some(first)).await;
    assert_eq!(status, StatusCode::CREATED);
    let (_, b) = h.call("POST", &uri, Some(second)).await;
    assert!(b["index"].as_u64() > a["index"].as_u64());

    let (_, view) = h.call("GET", &format!("/episodes/{id}"), None).await;
    assert_eq!(view["episode"], episode, "stored episode must be untouched");
    let actors: Vec<_> = view["overrides"].as_array().unwrap().iter().map(|o| o["actor"].clone()).collect();
    assert_eq!(actors, [json!("ceo"), json!("cto")]);

    // Overrides survive a restart through the log.
    let reopened = Service::open(ServiceConfig::new(h._dir.path())).unwrap();
    assert_eq!(reopened.episode_view(&id).unwrap().overrides.len(), 2);

    let (status, err) = h.call("POST", &uri, Some(json!({"actor": "ceo", "rationale": ""}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], json!("bad_request"));
    let (status, err) = h.call("POST", &uri, Some(json!({"actor": "ceo", "candidate": "candidate_Z", "rationale": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["message"].as_str().unwrap().contains("candidate_Z"));
}

#[tokio::test]
async fn errors_share_one_shape() {
    let h = Harness::new(&[fixtures::EVENTS]);
    let missing = "0".repeat(64);
    let cases = [
        ("GET", format!("/episodes/{missing}"), None, StatusCode::NOT_FOUND, "unknown_episode"),
        ("GET", "/episodes/not-a-digest".to_string(), None, StatusCode::NOT_FOUND, "unknown_episode"),
        ("POST", format!("/episodes/{missing}/overrides"), Some(json!({"actor": "a", "rationale": "b"})), StatusCode::NOT_FOUND, "unknown_episode"),
        ("GET", "/graph/nodes/n9999".to_string(), None, StatusCode::NOT_FOUND, "unknown_node"),
        ("GET", "/graph/nodes/banana".to_string(), None, StatusCode::NOT_FOUND, "unknown_node"),
        ("GET", "/fit?human=nobody".to_string(), None, StatusCode::NOT_FOUND, "unknown_evaluation"),
        ("POST", "/proposals/nope/decision".to_string(), Some(json!({"approve": true})), StatusCode::NOT_FOUND, "unknown_proposal"),
        ("POST", "/episodes".to_string(), Some(json!({"mode": "sideways"})), StatusCode::BAD_REQUEST, "bad_request"),
    ];
    for (method, uri, body, want_status, want_kind) in cases {
        let (status, err) = h.call(method, &uri, body).await;
        assert_eq!(status, want_status, "{method} {uri}: {err}");
        assert_eq!(err["error"], json!(want_kind), "{method} {uri}");
        assert!(err["message"].is_string());
    }

    // Malformed JSON takes the same path.
    let request = Request::builder()
        .method("POST")
        .uri("/episodes")
        .body(Body::from("{not json"))
        .unwrap();
    let response = h.app().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn node_view_shows_evidence_and_neighbourhood() {
    let h = Harness::new(&[fixtures::EVENTS]);
    let graph = fixtures::context_graph();
    let node = graph.nodes().find(|n| n.label == fixtures::TRUST_BREACH_LABEL).unwrap();
    let (status, view) = h.call("GET", &format!("/graph/nodes/{}", node.id.0), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["label"], json!(fixtures::TRUST_BREACH_LABEL));
    assert!((view["confidence"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert_eq!(view["evidence"].as_array().unwrap().len(), 1);
    let edges = view["outgoing"].as_array().unwrap().len() + view["incoming"].as_array().unwrap().len();
    assert!(edges >= 1);
}

#[tokio::test]
async fn fit_endpoint_matches_the_pinned_fractions() {
    let h = Harness::new(&[fixtures::EVENTS]);
    let (status, rich) = h.call("GET", "/fit?human=ceo&machine=context_rich", None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, free) = h.call("GET", "/fit?human=ceo&machine=context_free", None).await;
    let composite = |v: &Value| v["composite"].as_f64().unwrap();
    assert!((composite(&rich) - 41.0 / 72.0).abs() < 1e-9, "{rich}");
    assert!((composite(&free) - 5.0 / 9.0).abs() < 1e-9, "{free}");
}

#[tokio::test]
async fn threshold_proposal_lifecycle() {
    let h = Harness::new(&[fixtures::EVENTS]);
    let submit = json!({
        "kind": "adjust_threshold",
        "target": {"config": "ethical_gate_threshold"},
        "magnitude": 0.95,
        "rationale": "gate only on near-certain breaches",
    });
    let (status, proposal) = h.call("POST", "/proposals", Some(submit)).await;
    assert_eq!(status, StatusCode::CREATED, "{proposal}");
    let id = proposal["id"].as_str().unwrap().to_string();

    let (_, listing) = h.call("GET", "/proposals", None).await;
    assert!(listing["pending"].as_array().unwrap().iter().any(|p| p["id"] == json!(id)));
    let before = listing["config"]["version"].as_u64().unwrap();

    let decision = format!("/proposals/{}/decision", urlencode(&id));
    let (status, outcome) = h
        .call("POST", &decision, Some(json!({"approve": true, "actor": "ceo", "rationale": "agreed"})))
        .await;
    assert_eq!(status, StatusCode::OK, "{outcome}");
    assert_eq!(outcome["config_version"].as_u64().unwrap(), before + 1);

    let (_, listing) = h.call("GET", "/proposals", None).await;
    assert_eq!(listing["config"]["config"]["ethical_gate_threshold"], json!(0.95));
    assert!(listing["decided"].as_array().unwrap().iter().any(|p| p["id"] == json!(id)));

    // G's 0.9 breach no longer clears the raised gate.
    let (_, episode) = h.call("POST", "/episodes", None).await;
    assert!(ranked(&episode).contains(&"G".to_string()));

    let (status, err) = h.call("POST", &decision, Some(json!({"approve": false}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], json!("already_decided"));

    // The approval is in the log, so a restart sees the same config.
    let reopened = Service::open(ServiceConfig::new(h._dir.path())).unwrap();
    assert_eq!(reopened.governed_config().config.ethical_gate_threshold, 0.95);
}

#[tokio::test]
async fn conflicted_episodes_escalate_on_repeat() {
    let h = Harness::new(&[fixtures::CONFLICT_EVENTS]);
    let kinds = |episode: &Value| -> Vec<String> {
        episode["oversight"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a["kind"].as_str().unwrap().to_string())
            .collect()
    };
    let (_, first) = h.call("POST", "/episodes", None).await;
    assert!(!first["conflicts"].as_array().unwrap().is_empty());
    assert!(!kinds(&first).contains(&"escalate".to_string()));
    let (_, second) = h.call("POST", "/episodes", Some(json!({"seed": 7}))).await;
    assert!(kinds(&second).contains(&"escalate".to_string()), "{:?}", kinds(&second));
}

fn urlencode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}
