//! Persistence, HTTP API and CLI plumbing around `mirror-core`.
//!
//! Every state change is an entry in an append-only, checksum-chained log.
//! The graph, the governed config, the proposal book and the override
//! annotations are all reconstructed by replaying that log. Episodes are
//! stored beside it, addressed by their content digest.

pub mod api;
pub mod error;
pub mod log;
pub mod service;
pub mod state;
pub mod store;

pub use error::ServiceError;
pub use log::{replay_log, EntryKind, LogEntry, LogError};
pub use service::{Service, ServiceConfig};
pub use state::{OverrideRecord, ProposalAction, State};
