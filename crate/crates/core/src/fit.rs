//! Person/AI fit between a human evaluation and a machine evaluation.
//!
//! Three components, each in a fixed range:
//!
//! - rank correlation over the candidates both sides ranked (Kendall tau by
//!   default, Spearman rho on request), in `[-1, 1]`;
//! - top-k overlap of the two rankings, in `[0, 1]`;
//! - Jaccard agreement of the excluded sets, in `[0, 1]`, with two empty sets
//!   counting as full agreement.
//!
//! The composite is `w_tau * (tau + 1) / 2 + w_topk * topk + w_excl * exclusion`
//! with weights summing to one. It is one admissible scale, not a calibrated one.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("only {shared} candidates ranked by both sides; need at least 2")]
    InsufficientOverlap { shared: usize },
    #[error("k = {k} exceeds the shorter ranking ({available})")]
    KTooLarge { k: usize, available: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("fit weights {0:?} must be nonnegative and sum to 1")]
    BadWeights([f64; 3]),
    #[error("invalid evaluation `{evaluator}`: {reason}")]
    InvalidEvaluation { evaluator: String, reason: String },
}

pub type Result<T, E = FitError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub evaluator: String,
    pub ranked: Vec<String>,
    #[serde(default)]
    pub excluded: BTreeSet<String>,
}

impl Evaluation {
    pub fn new(
        evaluator: impl Into<String>,
        ranked: impl IntoIterator<Item = impl Into<String>>,
        excluded: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self> {
        let eval = Self {
            evaluator: evaluator.into(),
            ranked: ranked.into_iter().map(Into::into).collect(),
            excluded: excluded.into_iter().map(Into::into).collect(),
        };
        eval.validate()?;
        Ok(eval)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| FitError::InvalidEvaluation {
            evaluator: self.evaluator.clone(),
            reason,
        };
        let mut seen = BTreeSet::new();
        for id in &self.ranked {
            if !seen.insert(id) {
                return Err(invalid(format!("`{id}` ranked twice")));
            }
            if self.excluded.contains(id) {
                return Err(invalid(format!("`{id}` is both ranked and excluded")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    #[default]
    KendallTau,
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWeights {
    pub tau: f64,
    pub topk: f64,
    pub exclusion: f64,
}

impl Default for FitWeights {
    fn default() -> Self {
        Self {
            tau: 0.5,
            topk: 0.25,
            exclusion: 0.25,
        }
    }
}

impl FitWeights {
    pub fn new(tau: f64, topk: f64, exclusion: f64) -> Result<Self> {
        let w = Self { tau, topk, exclusion };
        w.validate()?;
        Ok(w)
    }

    fn as_array(self) -> [f64; 3] {
        [self.tau, self.topk, self.exclusion]
    }

    pub fn validate(&self) -> Result<()> {
        let arr = self.as_array();
        let ok = arr.iter().all(|w| w.is_finite() && *w >= 0.0) && (arr.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(FitError::BadWeights(arr))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub weights: FitWeights,
    pub k: usize,
    pub metric: RankMetric,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weights: FitWeights::default(),
            k: 3,
            metric: RankMetric::KendallTau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub human: String,
    pub machine: String,
    pub metric: RankMetric,
    pub tau: f64,
    pub topk: f64,
    pub k: usize,
    pub exclusion: f64,
    pub composite: f64,
    pub weights: FitWeights,
    pub shared: usize,
}

impl FitReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let metric = match self.metric {
            RankMetric::KendallTau => "kendall_tau",
            RankMetric::Spearman => "spearman_rho",
        };
        let rows = [
            (metric.to_string(), self.tau, self.weights.tau),
            (format!("top{}_overlap", self.k), self.topk, self.weights.topk),
            ("exclusion_agreement".to_string(), self.exclusion, self.weights.exclusion),
        ];
        let mut out = format!("fit {} vs {} (shared candidates: {})\n", self.human, self.machine, self.shared);
        let _ = writeln!(out, "{:<22} {:>9} {:>7}", "component", "value", "weight");
        for (name, value, weight) in rows {
            let _ = writeln!(out, "{name:<22} {value:>9.6} {weight:>7.3}");
        }
        let _ = writeln!(out, "{:<22} {:>9.6}", "composite", self.composite);
        out
    }
}

/// Items of `a` that also appear in `b`, in `a`'s order, with their positions in `b`.
fn shared_positions<S: AsRef<str>>(a: &[S], b: &[S]) -> Vec<usize> {
    let pos_b: HashMap<&str, usize> = b.iter().enumerate().map(|(i, s)| (s.as_ref(), i)).collect();
    a.iter().filter_map(|s| pos_b.get(s.as_ref()).copied()).collect()
}

/// Count inversions by merge sort.
fn inversions(values: &mut [usize]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = inversions(&mut values[..mid]) + inversions(&mut values[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if values[i] <= values[j] {
            merged.push(values[i]);
            i += 1;
        } else {
            merged.push(values[j]);
            count += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&values[i..mid]);
    merged.extend_from_slice(&values[j..]);
    values.copy_from_slice(&merged);
    count
}

/// Kendall tau-a between two rankings, over the candidates both contain.
pub fn rank_correlation<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<f64> {
    let mut positions = shared_positions(a, b);
    let n = positions.len();
    if n < 2 {
        return Err(FitError::InsufficientOverlap { shared: n });
    }
    let pairs = (n * (n - 1) / 2) as u64;
    let discordant = inversions(&mut positions);
    let concordant = pairs - discordant;
    Ok((concordant as f64 - discordant as f64) / pairs as f64)
}

/// Spearman rho between two rankings, over the candidates both contain.
pub fn spearman<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<f64> {
    let positions = shared_positions(a, b);
    let n = positions.len();
    if n < 2 {
        return Err(FitError::InsufficientOverlap { shared: n });
    }
    // re-rank b positions within the shared set
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| positions[i]);
    let mut rank_b = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        rank_b[i] = rank;
    }
    let d2: f64 = rank_b
        .iter()
        .enumerate()
        .map(|(rank_a, &rb)| (rank_a as f64 - rb as f64).powi(2))
        .sum();
    let n = n as f64;
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// Share of the top `k` of `a` that is also in the top `k` of `b`.
pub fn topk_overlap<S: AsRef<str>>(a: &[S], b: &[S], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(FitError::ZeroK);
    }
    let available = a.len().min(b.len());
    if k > available {
        return Err(FitError::KTooLarge { k, available });
    }
    let top_a: BTreeSet<&str> = a[..k].iter().map(AsRef::as_ref).collect();
    let hits = b[..k].iter().filter(|s| top_a.contains(s.as_ref())).count();
    Ok(hits as f64 / k as f64)
}

/// Jaccard similarity of the excluded sets; two empty sets agree fully.
pub fn exclusion_agreement(a: &Evaluation, b: &Evaluation) -> f64 {
    let union = a.excluded.union(&b.excluded).count();
    if union == 0 {
        return 1.0;
    }
    a.excluded.intersection(&b.excluded).count() as f64 / union as f64
}

pub fn fit_score(human: &Evaluation, machine: &Evaluation, options: &FitOptions) -> Result<FitReport> {
    options.weights.validate()?;
    human.validate()?;
    machine.validate()?;
    let tau = match options.metric {
        RankMetric::KendallTau => rank_correlation(&human.ranked, &machine.ranked)?,
        RankMetric::Spearman => spearman(&human.ranked, &machine.ranked)?,
    };
    let topk = topk_overlap(&human.ranked, &machine.ranked, options.k)?;
    let exclusion = exclusion_agreement(human, machine);
    let w = options.weights;
    let composite = w.tau * (tau + 1.0) / 2.0 + w.topk * topk + w.exclusion * exclusion;
    Ok(FitReport {
        human: human.evaluator.clone(),
        machine: machine.evaluator.clone(),
        metric: options.metric,
        tau,
        topk,
        k: options.k,
        exclusion,
        composite: composite.clamp(0.0, 1.0),
        weights: w,
        shared: shared_positions(&human.ranked, &machine.ranked).len(),
    })
}

/// Side-by-side rankings, one column per evaluation; excluded candidates are
/// listed after the ranked ones and marked.
pub fn render_side_by_side(evaluations: &[&Evaluation]) -> String {
    let columns: Vec<Vec<String>> = evaluations
        .iter()
        .map(|e| {
            e.ranked
                .iter()
                .cloned()
                .chain(e.excluded.iter().map(|id| format!("{id} (excluded)")))
                .collect()
        })
        .collect();
    let width = columns
        .iter()
        .flatten()
        .map(String::len)
        .chain(evaluations.iter().map(|e| e.evaluator.len()))
        .max()
        .unwrap_or(0)
        .max(4);
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = format!("{:<5}", "rank");
    for e in evaluations {
        let _ = write!(out, " {:<width$}", e.evaluator);
    }
    out.push('\n');
    for r in 0..rows {
        let _ = write!(out, "{:<5}", r + 1);
        for col in &columns {
            let cell = col.get(r).map_or("--", String::as_str);
            let _ = write!(out, " {cell:<width$}");
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
    }
    out
}


#[cfg(test)]
mod tests {
    use super::oracle::kendall_by_pairs;
    use super::*;
    use proptest::prelude::*;

    fn ids(s: &str) -> Vec<String> {
        s.chars().map(String::from).collect()
    }

    #[test]
    fn tau_examples() {
        assert_eq!(rank_correlation(&ids("ABCD"), &ids("ABCD")).unwrap(), 1.0);
        assert_eq!(rank_correlation(&ids("ABCD"), &ids("DCBA")).unwrap(), -1.0);
        assert_eq!(
            rank_correlation(&ids("AB"), &ids("AC")),
            Err(FitError::InsufficientOverlap { shared: 1 })
        );
    }

    #[test]
    fn tau_on_reported_orders_matches_pair_count() {
        let ceo = ids("DCABJFEHGI");
        let baseline = ids("GDCEJBAFIH");
        // Pair enumeration by hand-checked oracle: 29 concordant, 16 discordant of 45.
        let want = 13.0 / 45.0;
        assert_eq!(kendall_by_pairs(&ceo, &baseline), Some(want));
        assert_eq!(rank_correlation(&ceo, &baseline).unwrap(), want);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&ids("ABCD"), &ids("ABCD")).unwrap(), 1.0);
        assert_eq!(spearman(&ids("ABCD"), &ids("DCBA")).unwrap(), -1.0);
        // d = (1,1,0) => rho = 1 - 6*2/(3*8) = 0.5
        assert_eq!(spearman(&ids("ABC"), &ids("BAC")).unwrap(), 0.5);
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk_overlap(&ids("ABCD"), &ids("CBAD"), 3).unwrap(), 1.0);
        let third = topk_overlap(&ids("DCA"), &ids("DJB"), 3).unwrap();
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            topk_overlap(&ids("AB"), &ids("ABC"), 3),
            Err(FitError::KTooLarge { k: 3, available: 2 })
        );
        assert_eq!(topk_overlap(&ids("AB"), &ids("AB"), 0), Err(FitError::ZeroK));
    }

    #[test]
    fn exclusion_examples() {
        let e = |ex: &[&str]| Evaluation::new("x", Vec::<String>::new(), ex.iter().copied()).unwrap();
        assert_eq!(exclusion_agreement(&e(&["G"]), &e(&["G"])), 1.0);
        assert_eq!(exclusion_agreement(&e(&["G"]), &e(&[])), 0.0);
        assert_eq!(exclusion_agreement(&e(&[]), &e(&[])), 1.0);
    }

    #[test]
    fn composite_examples() {
        let human = Evaluation::new("CEO", ids("DCAB"), ["G"]).unwrap();
        let report = fit_score(&human, &human.clone(), &FitOptions::default()).unwrap();
        assert_eq!(report.composite, 1.0);
        assert_eq!(FitWeights::new(0.6, 0.3, 0.2), Err(FitError::BadWeights([0.6, 0.3, 0.2])));
        let opts = FitOptions {
            weights: FitWeights { tau: 0.6, topk: 0.3, exclusion: 0.2 },
            ..FitOptions::default()
        };
        assert!(matches!(fit_score(&human, &human, &opts), Err(FitError::BadWeights(_))));
    }

    #[test]
    fn evaluation_invariants() {
        assert!(Evaluation::new("x", ["A", "A"], Vec::<String>::new()).is_err());
        assert!(Evaluation::new("x", ["A"], ["A"]).is_err());
    }

    #[test]
    fn side_by_side_layout() {
        let a = Evaluation::new("rich", ["D", "J"], ["G"]).unwrap();
        let b = Evaluation::new("free", ["G", "D", "C"], Vec::<String>::new()).unwrap();
        let table = render_side_by_side(&[&a, &b]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].contains("G (excluded)") && lines[3].ends_with('C'));
    }

    fn permutation(n: usize) -> impl Strategy<Value = Vec<String>> {
        Just((0..n).map(|i| format!("c{i}")).collect::<Vec<_>>()).prop_shuffle()
    }

    proptest! {
        #[test]
        fn tau_is_symmetric_bounded_and_matches_oracle(a in permutation(8), b in permutation(8)) {
            let t = rank_correlation(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert_eq!(t, rank_correlation(&b, &a).unwrap());
            prop_assert_eq!(Some(t), kendall_by_pairs(&a, &b));
        }

        #[test]
        fn composite_stays_in_unit_interval(
            a in permutation(6),
            b in permutation(6),
            w in (0.0f64..1.0, 0.0f64..1.0),
            k in 1usize..=6,
        ) {
            let (x, y) = (w.0, w.1 * (1.0 - w.0));
            let weights = FitWeights { tau: x, topk: y, exclusion: 1.0 - x - y };
            let human = Evaluation::new("h", a, Vec::<String>::new()).unwrap();
            let machine = Evaluation::new("m", b, Vec::<String>::new()).unwrap();
            let report = fit_score(&human, &machine, &FitOptions { weights, k, metric: RankMetric::KendallTau }).unwrap();
            prop_assert!((0.0..=1.0).contains(&report.composite));
        }
    }
}
