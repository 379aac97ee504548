//! Canonical text form of a graph and the snapshot hash derived from it.
//!
//! The form is JSON with sorted object keys, nodes, edges and evidence in id
//! order, and no bookkeeping fields (version, id counters). Two graphs with
//! the same content therefore hash the same however they were built.

use serde::Serialize;

use super::{GraphEdge, GraphNode, MirrorGraph, Segment};
use crate::digest::{canonical_json, sha256_hex};
use crate::Timestamp;

/// Hash of `MirrorGraph::new("persona")`, pinned so format drift is caught.
pub const EMPTY_SNAPSHOT_HASH: &str = "317832efdcb15ad82dd3991a204b5f97a6027ac5d28436df2b7bd9affe0a3059";

#[derive(Debug, Serialize)]
pub struct CanonicalSnapshot<'a> {
    pub format: &'static str,
    pub owner_persona: &'a str,
    pub clock: Option<Timestamp>,
    pub decay_per_day: f64,
    pub nodes: Vec<&'a GraphNode>,
    pub edges: Vec<&'a GraphEdge>,
    pub segments: &'a [Segment],
}

impl MirrorGraph {
    pub fn canonical(&self) -> CanonicalSnapshot<'_> {
        let nodes = self
            .nodes()
            .inspect(|node| debug_assert!(node.evidence.is_sorted_by_key(|ev| ev.observed_at)))
            .collect();
        CanonicalSnapshot {
            format: "mirror-graph/1",
            owner_persona: self.owner_persona(),
            clock: self.clock(),
            decay_per_day: self.decay_per_day(),
            nodes,
            edges: self.edges().collect(),
            segments: self.segments(),
        }
    }

    /// The canonical serialization as text.
    pub fn canonical_text(&self) -> String {
        canonical_json(&self.canonical())
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn snapshot_hash(&self) -> String {
        sha256_hex(self.canonical_text().as_bytes())
    }
}
