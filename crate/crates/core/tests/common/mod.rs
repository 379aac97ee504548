//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

/// Kendall tau-a by enumerating every pair of the shared items.
pub fn kendall_pairs(a: &[String], b: &[String]) -> Option<f64> {
    let shared: Vec<&String> = a.iter().filter(|x| b.contains(x)).collect();
    let n = shared.len();
    if n < 2 {
        return None;
    }
    let pos = |list: &[String], x: &String| list.iter().position(|y| y == x).unwrap() as i64;
    let (mut concordant, mut discordant) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let s = (pos(a, shared[i]) - pos(a, shared[j])) * (pos(b, shared[i]) - pos(b, shared[j]));
            if s > 0 {
                concordant += 1;
            } else if s < 0 {
                discordant += 1;
            }
        }
    }
    Some((concordant - discordant) as f64 / (n * (n - 1) / 2) as f64)
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

pub fn ids(letters: &str) -> Vec<String> {
    letters.chars().map(|c| format!("candidate_{c}")).collect()
}
