//! Signal windows to latent states, prediction errors and update proposals.
//!
//! The encoder is a fixed pipeline: per-channel mean and variance,
//! standardized against configured baselines, projected through a fixed
//! matrix and clipped to the unit ball. Nothing here learns; proposals are
//! plain threshold rules and always start out pending.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{MirrorGraph, NodeId};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynapseError {
    #[error("window channels {found:?} do not match configured channels {expected:?}")]
    ChannelMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("signal window has no samples")]
    EmptyWindow,
    #[error("invalid signal window: {0}")]
    InvalidWindow(String),
    #[error("latent dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid synapse config: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = SynapseError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalWindow {
    pub start: Timestamp,
    pub end: Timestamp,
    pub channels: BTreeMap<String, Vec<f64>>,
}

impl SignalWindow {
    pub fn sample_count(&self) -> usize {
        self.channels.values().next().map_or(0, Vec::len)
    }

    /// Read a columnar fixture: a `timestamp` column followed by one column per channel.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| SynapseError::Parse { line: 1, message: e.to_string() })?
            .clone();
        if headers.get(0) != Some("timestamp") {
            return Err(SynapseError::Parse {
                line: 1,
                message: "first column must be `timestamp`".into(),
            });
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut channels: BTreeMap<String, Vec<f64>> = names.iter().map(|n| (n.clone(), Vec::new())).collect();
        let mut times = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| SynapseError::Parse { line, message: e.to_string() })?;
            let ts: Timestamp = record[0]
                .parse()
                .map_err(|e: chrono::ParseError| SynapseError::Parse { line, message: e.to_string() })?;
            times.push(ts);
            for (name, field) in names.iter().zip(record.iter().skip(1)) {
                let value: f64 = field.parse().map_err(|_| SynapseError::Parse {
                    line,
                    message: format!("`{field}` is not a number"),
                })?;
                channels.get_mut(name).expect("column registered").push(value);
            }
        }
        let (Some(&start), Some(&last)) = (times.first(), times.last()) else {
            return Err(SynapseError::EmptyWindow);
        };
        let end = if last > start { last } else { start + chrono::Duration::seconds(1) };
        Ok(Self { start, end, channels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBaseline {
    pub mean: f64,
    pub mean_scale: f64,
    pub variance: f64,
    pub variance_scale: f64,
}

impl ChannelBaseline {
    pub const ZERO: ChannelBaseline = ChannelBaseline {
        mean: 0.0,
        mean_scale: 1.0,
        variance: 0.0,
        variance_scale: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynapseConfig {
    /// Channel order fixes the feature layout: `[mean_0, var_0, mean_1, var_1, ...]`.
    pub channels: Vec<String>,
    pub baselines: BTreeMap<String, ChannelBaseline>,
    /// `d` rows of `2 * channels.len()` columns.
    pub projection: Vec<Vec<f64>>,
    pub error_threshold: f64,
    pub regime_window: usize,
    /// Uncertainty added per unit of error above the threshold.
    pub uncertainty_gain: f64,
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

impl Default for SynapseConfig {
    fn default() -> Self {
        let baselines = [
            ("heart_rate", 70.0, 10.0, 25.0, 25.0),
            ("electrodermal", 2.0, 1.0, 0.25, 0.25),
            ("respiration", 14.0, 3.0, 4.0, 4.0),
            ("movement", 0.2, 0.2, 0.01, 0.01),
        ];
        Self {
            channels: baselines.iter().map(|b| b.0.to_string()).collect(),
            baselines: baselines
                .iter()
                .map(|&(name, mean, mean_scale, variance, variance_scale)| {
                    (
                        name.to_string(),
                        ChannelBaseline {
                            mean,
                            mean_scale,
                            variance,
                            variance_scale,
                        },
                    )
                })
                .collect(),
            projection: identity(8),
            error_threshold: 0.5,
            regime_window: 3,
            uncertainty_gain: 0.5,
        }
    }
}

impl SynapseConfig {
    /// Config with all-zero baselines and unit scales over `channels`, identity projection.
    pub fn unit(channels: &[&str]) -> Self {
        Self {
            channels: channels.iter().map(|c| c.to_string()).collect(),
            baselines: channels.iter().map(|c| (c.to_string(), ChannelBaseline::ZERO)).collect(),
            projection: identity(2 * channels.len()),
            ..Self::default()
        }
    }

    pub fn dimension(&self) -> usize {
        self.projection.len()
    }

    pub fn validate(&self) -> Result<()> {
        let features = 2 * self.channels.len();
        if self.projection.is_empty() {
            return Err(SynapseError::Config("projection has no rows".into()));
        }
        if let Some(row) = self.projection.iter().find(|row| row.len() != features) {
            return Err(SynapseError::Config(format!(
                "projection row has {} columns, expected {features}",
                row.len()
            )));
        }
        for channel in &self.channels {
            let b = self
                .baselines
                .get(channel)
                .ok_or_else(|| SynapseError::Config(format!("no baseline for `{channel}`")))?;
            if !(b.mean_scale > 0.0 && b.variance_scale > 0.0) {
                return Err(SynapseError::Config(format!("non-positive scale for `{channel}`")));
            }
        }
        if !self.error_threshold.is_finite() || self.regime_window == 0 {
            return Err(SynapseError::Config("threshold must be finite and window at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub vector: Vec<f64>,
    pub as_of: Timestamp,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Standardized `[mean, variance]` pairs per configured channel, before projection.
pub fn channel_features(window: &SignalWindow, config: &SynapseConfig) -> Result<Vec<f64>> {
    let found: Vec<String> = window.channels.keys().cloned().collect();
    let expected: BTreeSet<&String> = config.channels.iter().collect();
    if found.len() != expected.len() || !found.iter().all(|c| expected.contains(c)) {
        return Err(SynapseError::ChannelMismatch {
            expected: config.channels.clone(),
            found,
        });
    }
    let n = window.sample_count();
    if n == 0 {
        return Err(SynapseError::EmptyWindow);
    }
    if window.channels.values().any(|s| s.len() != n) {
        return Err(SynapseError::InvalidWindow("channels have different sample counts".into()));
    }
    if window.end <= window.start {
        return Err(SynapseError::InvalidWindow("window end must follow its start".into()));
    }
    let mut features = Vec::with_capacity(2 * config.channels.len());
    for channel in &config.channels {
        let samples = &window.channels[channel];
        let b = config.baselines[channel];
        let mean = samples.iter().sum::<f64>() / n as f64;
        let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        features.push((mean - b.mean) / b.mean_scale);
        features.push((variance - b.variance) / b.variance_scale);
    }
    Ok(features)
}

pub fn encode_state(window: &SignalWindow, config: &SynapseConfig) -> Result<LatentState> {
    config.validate()?;
    let features = channel_features(window, config)?;
    let mut vector: Vec<f64> = config
        .projection
        .iter()
        .map(|row| row.iter().zip(&features).map(|(w, x)| w * x).sum())
        .collect();
    let length = norm(&vector);
    if length > 1.0 {
        vector.iter_mut().for_each(|x| *x /= length);
    }
    Ok(LatentState {
        vector,
        as_of: window.end,
    })
}

/// Euclidean distance between two latent states.
pub fn prediction_error(predicted: &LatentState, observed: &LatentState) -> Result<f64> {
    if predicted.vector.len() != observed.vector.len() {
        return Err(SynapseError::DimensionMismatch(
            predicted.vector.len(),
            observed.vector.len(),
        ));
    }
    Ok(predicted
        .vector
        .iter()
        .zip(&observed.vector)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Retained summary of a run of windows: raw samples are dropped after encoding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalSummary {
    pub latest: Option<LatentState>,
    pub errors: Vec<(Timestamp, f64)>,
    /// Nodes the signals are about, targeted by uncertainty proposals.
    pub context: BTreeSet<NodeId>,
}

impl SignalSummary {
    /// Encode `windows` in order, predicting each state by its predecessor.
    pub fn from_windows(windows: &[SignalWindow], context: BTreeSet<NodeId>, config: &SynapseConfig) -> Result<Self> {
        let mut summary = SignalSummary {
            context,
            ..Default::default()
        };
        for window in windows {
            let observed = encode_state(window, config)?;
            if let Some(predicted) = &summary.latest {
                summary.errors.push((observed.as_of, prediction_error(predicted, &observed)?));
            }
            summary.latest = Some(observed);
        }
        Ok(summary)
    }
}

// ---------------------------------------------------------------------------
// Proposals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    RaiseUncertainty,
    AddEvidence,
    RegimeShift,
    AdjustThreshold,
}

impl fmt::Display for ProposalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProposalKind::RaiseUncertainty => "raise_uncertainty",
            ProposalKind::AddEvidence => "add_evidence",
            ProposalKind::RegimeShift => "regime_shift",
            ProposalKind::AdjustThreshold => "adjust_threshold",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalTarget {
    Node(NodeId),
    Config(String),
}

impl fmt::Display for ProposalTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProposalTarget::Node(id) => write!(f, "{id}"),
            ProposalTarget::Config(key) => write!(f, "config.{key}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("proposal `{0}` was already decided")]
pub struct AlreadyDecided(pub String);

/// Config key a regime-shift proposal targets.
pub const REGIME_KEY: &str = "regime_epoch";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateProposal {
    pub id: String,
    pub kind: ProposalKind,
    pub target: ProposalTarget,
    pub magnitude: f64,
    pub rationale: String,
    pub status: ProposalStatus,
}

impl UpdateProposal {
    pub fn new(kind: ProposalKind, target: ProposalTarget, magnitude: f64, rationale: impl Into<String>, at: Timestamp) -> Self {
        assert!(magnitude.is_finite(), "proposal magnitude must be finite");
        Self {
            id: format!("{kind}:{target}@{}", at.format("%Y%m%dT%H%M%SZ")),
            kind,
            target,
            magnitude,
            rationale: rationale.into(),
            status: ProposalStatus::Pending,
        }
    }

    /// Move a pending proposal to approved or rejected.
    pub fn decide(&mut self, approve: bool) -> Result<(), AlreadyDecided> {
        if self.status != ProposalStatus::Pending {
            return Err(AlreadyDecided(self.id.clone()));
        }
        self.status = if approve {
            ProposalStatus::Approved
        } else {
            ProposalStatus::Rejected
        };
        Ok(())
    }
}

/// Threshold rules over a time-ordered error series.
///
/// If the latest error reaches the threshold, every context node present in
/// the graph gets a `raise_uncertainty` proposal. If the last `regime_window`
/// errors all reach it, one `regime_shift` proposal is added as well.
pub fn propose_updates(
    graph: &MirrorGraph,
    errors: &[(Timestamp, f64)],
    context: &BTreeSet<NodeId>,
    config: &SynapseConfig,
) -> Vec<UpdateProposal> {
    debug_assert!(errors.windows(2).all(|w| w[0].0 <= w[1].0), "errors must be time-ordered");
    let theta = config.error_threshold;
    let Some(&(at, latest)) = errors.last() else {
        return Vec::new();
    };
    if latest < theta {
        return Vec::new();
    }
    let mut proposals: Vec<UpdateProposal> = context
        .iter()
        .filter_map(|&id| graph.node(id))
        .map(|node| {
            let magnitude = ((latest - theta) * config.uncertainty_gain).clamp(0.0, 1.0);
            UpdateProposal::new(
                ProposalKind::RaiseUncertainty,
                ProposalTarget::Node(node.id),
                magnitude,
                format!("prediction error {latest:.3} >= {theta:.3} while `{}` was in context", node.label),
                at,
            )
        })
        .collect();

    let w = config.regime_window;
    if errors.len() >= w && errors[errors.len() - w..].iter().all(|&(_, e)| e >= theta) {
        let mean = errors[errors.len() - w..].iter().map(|&(_, e)| e).sum::<f64>() / w as f64;
        proposals.push(UpdateProposal::new(
            ProposalKind::RegimeShift,
            ProposalTarget::Config(REGIME_KEY.into()),
            mean,
            format!("{w} consecutive prediction errors at or above {theta:.3} (mean {mean:.3})"),
            at,
        ));
    }
    proposals
}
