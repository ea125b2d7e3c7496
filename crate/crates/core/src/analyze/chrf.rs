use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// A chrF score in `[0, 100]` with the parameters that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfScore {
    pub value: f64,
    pub n_max: usize,
    pub beta: f64,
}

pub const DEFAULT_N_MAX: usize = 6;
pub const DEFAULT_BETA: f64 = 2.0;

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Character n-gram F-score.
///
/// Whitespace is removed before n-grams are extracted. For each order
/// `1..=n_max` clipped precision and recall are computed; each is averaged
/// over the orders where its denominator is non-zero, and the averages are
/// combined as `(1+β²)·P·R / (β²·P + R)`, scaled to 100.
pub fn chrf(reference: &str, hypothesis: &str, n_max: usize, beta: f64) -> ChrfScore {
    assert!(n_max >= 1, "n_max must be at least 1");
    assert!(beta > 0.0, "beta must be positive");
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();

    let (mut p_sum, mut p_orders, mut r_sum, mut r_orders) = (0.0, 0usize, 0.0, 0usize);
    for n in 1..=n_max {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        let h_total: usize = hc.values().sum();
        let r_total: usize = rc.values().sum();
        let matched: usize = hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum();
        if h_total > 0 {
            p_sum += matched as f64 / h_total as f64;
            p_orders += 1;
        }
        if r_total > 0 {
            r_sum += matched as f64 / r_total as f64;
            r_orders += 1;
        }
    }
    let p = if p_orders > 0 { p_sum / p_orders as f64 } else { 0.0 };
    let rec = if r_orders > 0 { r_sum / r_orders as f64 } else { 0.0 };
    let b2 = beta * beta;
    let denom = b2 * p + rec;
    let value = if p + rec == 0.0 || denom == 0.0 {
        0.0
    } else {
        100.0 * (1.0 + b2) * p * rec / denom
    };
    ChrfScore { value: value.clamp(0.0, 100.0), n_max, beta }
}

/// chrF with the default order 6 and β = 2.
pub fn chrf2(reference: &str, hypothesis: &str) -> ChrfScore {
    chrf(reference, hypothesis, DEFAULT_N_MAX, DEFAULT_BETA)
}
