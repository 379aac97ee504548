//! Context-sensitive decision support over a persistent, evidence-bearing
//! profile graph.
//!
//! The crate is organised around the decision loop:
//!
//! - [`graph`]: the layered profile graph with scored, decaying evidence.
//! - [`ingest`]: competency frameworks, candidate profiles and context event logs.
//! - [`synapse`]: signal windows to latent states, prediction errors and update proposals.
//! - [`episode`]: the five-step decision episode, ethical gate, oversight and co-evolution.
//! - [`fit`]: rank correlation, top-k overlap and exclusion agreement between evaluations.
//! - [`fixtures`]: the bundled ten-candidate hiring scenario.

pub mod digest;
pub mod episode;
pub mod fit;
pub mod fixtures;
pub mod graph;
pub mod ingest;
pub mod synapse;

pub use chrono::{DateTime, Utc};

/// Instants on the graph clock.
pub type Timestamp = DateTime<Utc>;
