use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ErrorKind, EvalError, EvalVerdict, FeatureTag};
use crate::analyze::Domain;
use crate::corpus::LengthStratum;

/// A percentage with its binomial standard error, both in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub hits: usize,
    pub total: usize,
    pub percent: f64,
    pub stderr: f64,
}

impl Rate {
    pub fn new(hits: usize, total: usize) -> Rate {
        if total == 0 {
            return Rate { hits, total, percent: 0.0, stderr: 0.0 };
        }
        let p = hits as f64 / total as f64;
        Rate { hits, total, percent: 100.0 * p, stderr: 100.0 * (p * (1.0 - p) / total as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: LengthStratum,
    pub tasks: usize,
    pub matched: usize,
    /// Percent; `None` for an empty bucket.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainFailures {
    pub domain: Domain,
    pub tasks: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub tag: FeatureTag,
    pub failed_with_tag: usize,
    pub failed_total: usize,
    /// Percent of failed tasks carrying the tag.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCount {
    pub category: ErrorKind,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub tasks: usize,
    /// Tasks withheld for toolchain or task defects; not in any denominator.
    pub infra_errors: usize,
    pub test_acc: Rate,
    pub compile_rate: Rate,
    pub normalized_acc: Option<Rate>,
    pub chrf_mean: Option<f64>,
    pub strata: Vec<StratumRow>,
    pub domains: Vec<DomainFailures>,
    /// Failed tasks per category; a task counts once per category it shows.
    pub errors: Vec<ErrorCount>,
    pub features: Vec<FeatureRow>,
    pub runtime_delta_mean: Option<f64>,
    pub memory_delta_mean: Option<f64>,
    /// Percent of profiled tasks within ±0.5 s of the reference.
    pub within_half_second: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Folds one run's verdicts into the benchmark table.
pub fn aggregate_metrics(verdicts: &[EvalVerdict]) -> Result<MetricsTable, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let n = verdicts.len();
    let count = |f: &dyn Fn(&EvalVerdict) -> bool| verdicts.iter().filter(|v| f(v)).count();
    let normalized: Vec<bool> = verdicts.iter().filter_map(|v| v.normalized_match).collect();
    let chrfs: Vec<f64> = verdicts.iter().filter_map(|v| v.chrf.map(|c| c.value)).collect();
    let failed: Vec<&EvalVerdict> = verdicts.iter().filter(|v| !v.output_match).collect();

    let strata = LengthStratum::ALL
        .iter()
        .map(|&s| {
            let tasks = count(&|v| v.stratum == s);
            let matched = count(&|v| v.stratum == s && v.output_match);
            StratumRow { stratum: s, tasks, matched, accuracy: (tasks > 0).then(|| 100.0 * matched as f64 / tasks as f64) }
        })
        .collect();

    let mut domains: BTreeMap<Domain, (usize, usize)> = BTreeMap::new();
    for v in verdicts {
        let e = domains.entry(v.domain).or_default();
        e.0 += 1;
        if !v.output_match {
            e.1 += 1;
        }
    }

    let mut errors: BTreeMap<ErrorKind, usize> = ErrorKind::ALL.iter().map(|&k| (k, 0)).collect();
    for v in &failed {
        for c in &v.error_categories {
            *errors.get_mut(&c.name).expect("every kind seeded") += 1;
        }
    }

    let features = FeatureTag::ALL
        .iter()
        .map(|&tag| {
            let with = failed.iter().filter(|v| v.feature_tags.contains(&tag)).count();
            FeatureRow {
                tag,
                failed_with_tag: with,
                failed_total: failed.len(),
                percent: if failed.is_empty() { 0.0 } else { 100.0 * with as f64 / failed.len() as f64 },
            }
        })
        .collect();

    let runtime: Vec<f64> = verdicts.iter().filter_map(|v| v.runtime_delta).collect();
    let memory: Vec<f64> = verdicts.iter().filter_map(|v| v.memory_delta).collect();
    let within: Vec<bool> = verdicts.iter().filter_map(|v| v.within_half_second).collect();

    Ok(MetricsTable {
        tasks: n,
        infra_errors: 0,
        test_acc: Rate::new(count(&|v| v.output_match), n),
        compile_rate: Rate::new(count(&|v| v.compiled), n),
        normalized_acc: (!normalized.is_empty()).then(|| Rate::new(normalized.iter().filter(|m| **m).count(), normalized.len())),
        chrf_mean: mean(&chrfs),
        strata,
        domains: domains.into_iter().map(|(domain, (tasks, failed))| DomainFailures { domain, tasks, failed }).collect(),
        errors: errors.into_iter().map(|(category, tasks)| ErrorCount { category, tasks }).collect(),
        features,
        runtime_delta_mean: mean(&runtime),
        memory_delta_mean: mean(&memory),
        within_half_second: (!within.is_empty()).then(|| 100.0 * within.iter().filter(|w| **w).count() as f64 / within.len() as f64),
    })
}
