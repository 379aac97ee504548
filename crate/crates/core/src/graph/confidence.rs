use super::EvidenceRecord;
use crate::Timestamp;

/// Default evidence decay rate, per day.
pub const DEFAULT_DECAY_PER_DAY: f64 = 0.01;

const MILLIS_PER_DAY: f64 = 86_400_000.0;

/// `reliability * exp(-lambda * age_days) * (1 - uncertainty) * weight_multiplier`.
///
/// Age is measured on the graph clock and floored at zero, so evidence is
/// never boosted by being queried "before" it was observed.
pub fn contribution(evidence: &EvidenceRecord, as_of: Timestamp, decay_per_day: f64) -> f64 {
    let age_days = ((as_of - evidence.observed_at).num_milliseconds() as f64 / MILLIS_PER_DAY).max(0.0);
    evidence.reliability
        * (-decay_per_day * age_days).exp()
        * (1.0 - evidence.uncertainty)
        * evidence.weight_multiplier
}

/// `1 - prod(1 - c_i)`; zero for no contributions.
pub fn noisy_or<I: IntoIterator<Item = f64>>(contributions: I) -> f64 {
    let miss: f64 = contributions
        .into_iter()
        .map(|c| 1.0 - c.clamp(0.0, 1.0))
        .product();
    (1.0 - miss).clamp(0.0, 1.0)
}
