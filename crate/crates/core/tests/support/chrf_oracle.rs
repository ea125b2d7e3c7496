// Brute-force chrF: n-grams as owned strings, multiset overlap by
// linear search and strike-out. Slow on purpose; shares no code with the
// library implementation.

fn grams(s: &str, n: usize) -> Vec<String> {
    let cs: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= cs.len() {
        out.push(cs[i..i + n].iter().collect());
        i += 1;
    }
    out
}

pub fn oracle_chrf(reference: &str, hypothesis: &str, n_max: usize, beta: f64) -> f64 {
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for n in 1..=n_max {
        let hyp = grams(hypothesis, n);
        let mut pool: Vec<Option<String>> = grams(reference, n).into_iter().map(Some).collect();
        let ref_len = pool.len();
        let mut hits = 0usize;
        for g in &hyp {
            if let Some(slot) = pool.iter_mut().find(|s| s.as_deref() == Some(g.as_str())) {
                *slot = None;
                hits += 1;
            }
        }
        if !hyp.is_empty() {
            precisions.push(hits as f64 / hyp.len() as f64);
        }
        if ref_len > 0 {
            recalls.push(hits as f64 / ref_len as f64);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let (p, r) = (mean(&precisions), mean(&recalls));
    if p + r == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    100.0 * (1.0 + b2) * p * r / (b2 * p + r)
}

/// Recall averaged over orders, as a percentage.
pub fn oracle_recall(reference: &str, hypothesis: &str, n_max: usize) -> f64 {
    let mut recalls = Vec::new();
    for n in 1..=n_max {
        let mut pool: Vec<Option<String>> = grams(reference, n).into_iter().map(Some).collect();
        if pool.is_empty() {
            continue;
        }
        let mut hits = 0usize;
        for g in grams(hypothesis, n) {
            if let Some(slot) = pool.iter_mut().find(|s| s.as_deref() == Some(g.as_str())) {
                *slot = None;
                hits += 1;
            }
        }
        recalls.push(hits as f64 / pool.len() as f64);
    }
    if recalls.is_empty() {
        0.0
    } else {
        100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}
