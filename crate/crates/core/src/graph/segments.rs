//! Higher-order segments: node sets whose evidence keeps showing up together.
//!
//! Each distinct episode tag on evidence defines one co-occurrence episode.
//! Untagged evidence forms an episode of its own. A candidate segment is the
//! node set of some episode, and its support is the number of episodes whose
//! node set contains it. Segments that are strictly contained in another
//! reported segment with the same support are dropped.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{MirrorGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub member_nodes: BTreeSet<NodeId>,
    pub support: usize,
}

fn segment_id(members: &BTreeSet<NodeId>) -> String {
    let parts: Vec<String> = members.iter().map(ToString::to_string).collect();
    format!("seg:{}", parts.join("+"))
}

impl MirrorGraph {
    /// Segments with support of at least `min_support` (values below 1 are treated as 1).
    pub fn aggregate_segments(&self, min_support: usize) -> Vec<Segment> {
        let min_support = min_support.max(1);
        let mut episodes: BTreeMap<String, BTreeSet<NodeId>> = BTreeMap::new();
        for node in self.nodes() {
            for ev in &node.evidence {
                let tag = match &ev.episode_tag {
                    Some(tag) => format!("tag:{tag}"),
                    None => format!("untagged:{}", ev.id),
                };
                episodes.entry(tag).or_default().insert(node.id);
            }
        }

        let candidates: BTreeSet<&BTreeSet<NodeId>> = episodes.values().collect();
        let mut kept: Vec<(BTreeSet<NodeId>, usize)> = candidates
            .into_iter()
            .map(|set| {
                let support = episodes.values().filter(|ep| set.is_subset(ep)).count();
                (set.clone(), support)
            })
            .filter(|(_, support)| *support >= min_support)
            .collect();

        let closed: Vec<bool> = kept
            .iter()
            .map(|(set, support)| {
                !kept.iter().any(|(other, other_support)| {
                    other_support == support && other.len() > set.len() && set.is_subset(other)
                })
            })
            .collect();
        let mut keep = closed.into_iter();
        kept.retain(|_| keep.next().unwrap_or(false));

        let mut segments: Vec<Segment> = kept
            .into_iter()
            .map(|(member_nodes, support)| Segment {
                id: segment_id(&member_nodes),
                member_nodes,
                support,
            })
            .collect();
        segments.sort_by(|a, b| a.id.cmp(&b.id));
        segments
    }
}
