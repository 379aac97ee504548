//! Append-only, checksum-chained event log.
//!
//! Each entry's checksum covers its index, kind, canonical body, the graph
//! hash recorded after applying it, and the previous entry's checksum. Any
//! byte changed in a persisted entry breaks the chain at that entry.

use std::fmt;

use mirror_core::digest::{canonical_json, sha256_hex};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::state::State;

/// Checksum the first entry chains from.
pub const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogError {
    #[error("checksum mismatch at entry {0}")]
    ChecksumMismatch(u64),
    #[error("gap in log: expected index {expected}, found {found}")]
    GapInLog { expected: u64, found: u64 },
    #[error("entry {index} could not be applied: {message}")]
    Apply { index: u64, message: String },
    #[error("replay diverged at entry {index}: recorded {recorded}, rebuilt {rebuilt}")]
    ReplayDiverged { index: u64, recorded: String, rebuilt: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    ContextEvent,
    ProposalDecision,
    Override,
    ConfigChange,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::ContextEvent => "context_event",
            EntryKind::ProposalDecision => "proposal_decision",
            EntryKind::Override => "override",
            EntryKind::ConfigChange => "config_change",
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: u64,
    pub kind: EntryKind,
    pub body: Value,
    /// Graph snapshot hash after this entry was applied.
    pub snapshot_hash: String,
    pub checksum: String,
}

pub fn checksum(index: u64, kind: EntryKind, body: &Value, snapshot_hash: &str, previous: &str) -> String {
    let material = format!("{index}|{kind}|{}|{snapshot_hash}|{previous}", canonical_json(body));
    sha256_hex(material.as_bytes())
}

impl LogEntry {
    pub fn new(index: u64, kind: EntryKind, body: Value, snapshot_hash: String, previous: &str) -> Self {
        let checksum = checksum(index, kind, &body, &snapshot_hash, previous);
        Self {
            index,
            kind,
            body,
            snapshot_hash,
            checksum,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log entries serialize")
    }
}

/// Check index continuity and the checksum chain from the first entry.
pub fn verify_chain(entries: &[LogEntry]) -> Result<(), LogError> {
    let mut previous = GENESIS.to_string();
    for (expected, entry) in (0u64..).zip(entries) {
        if entry.index != expected {
            return Err(LogError::GapInLog {
                expected,
                found: entry.index,
            });
        }
        if checksum(entry.index, entry.kind, &entry.body, &entry.snapshot_hash, &previous) != entry.checksum {
            return Err(LogError::ChecksumMismatch(entry.index));
        }
        previous.clone_from(&entry.checksum);
    }
    Ok(())
}

/// Parse a line-delimited log. A line that no longer parses (e.g. a
/// corrupted byte in a structural position) is reported as a checksum
/// mismatch at the index it should have had.
pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, LogError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| serde_json::from_str(line).map_err(|_| LogError::ChecksumMismatch(i as u64)))
        .collect()
}

/// Verify the chain, then rebuild state by applying every entry in order.
///
/// The rebuilt graph must hash to what each entry recorded.
pub fn replay_log(entries: &[LogEntry], mut state: State) -> Result<State, LogError> {
    verify_chain(entries)?;
    for entry in entries {
        state.apply(entry.kind, &entry.body).map_err(|e| LogError::Apply {
            index: entry.index,
            message: e.to_string(),
        })?;
        let rebuilt = state.snapshot_hash();
        if rebuilt != entry.snapshot_hash {
            return Err(LogError::ReplayDiverged {
                index: entry.index,
                recorded: entry.snapshot_hash.clone(),
                rebuilt,
            });
        }
    }
    Ok(state)
}
