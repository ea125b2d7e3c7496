use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    aggregate_metrics, judge_assembly, judge_source, ErrorCategory, ErrorKind, EvalError, EvalVerdict, JudgeOptions,
    Level, MetricsTable, Progress, TaskLabels, ASSEMBLY_LABELS, SOURCE_LABELS,
};
use crate::buildfarm::Toolchain;
use crate::corpus::{write_jsonl, BenchRecord, LengthStratum};
use crate::pool::parallel_map;
use crate::synthgen::extract_fenced;

/// A task that could not be judged; excluded from every denominator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfraFailure {
    pub task_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub verdicts: Vec<EvalVerdict>,
    pub infra: Vec<InfraFailure>,
    pub metrics: MetricsTable,
}

/// Reads `<dir>/<task_id>.{s|hip}`. A file holding a fenced model reply is
/// reduced to its longest accepted block.
pub fn load_candidate(dir: &Path, task_id: &str, level: Level) -> Result<Option<String>, EvalError> {
    let path = dir.join(format!("{task_id}.{}", level.extension()));
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    if !text.lines().any(|l| l.trim_start().starts_with("```")) {
        return Ok(Some(text));
    }
    let labels = match level {
        Level::Assembly => ASSEMBLY_LABELS,
        Level::Source => SOURCE_LABELS,
    };
    Ok(Some(extract_fenced(&text, labels).unwrap_or(text)))
}

fn missing(task: &BenchRecord, level: Level) -> EvalVerdict {
    let r = &task.record;
    let labels = TaskLabels {
        task_id: r.id.clone(),
        level,
        stratum: LengthStratum::of(r.sass.token_count),
        domain: r.domain.name,
        feature_tags: r.cuda_src.as_ref().map(|s| super::feature_tags(&s.text)).unwrap_or_default(),
    };
    let cat = ErrorCategory { name: ErrorKind::Other, matched_diagnostic: "no candidate produced".into() };
    EvalVerdict::new(labels, Progress::CompileFailed(vec![cat]), None)
}

fn judge_one(task: &BenchRecord, dir: &Path, level: Level, tc: &Toolchain, opts: &JudgeOptions) -> Result<EvalVerdict, InfraFailure> {
    let id = &task.record.id;
    let infra = |e: EvalError| InfraFailure { task_id: id.clone(), message: e.to_string() };
    let Some(candidate) = load_candidate(dir, id, level).map_err(infra)? else {
        return Ok(missing(task, level));
    };
    match level {
        Level::Assembly => judge_assembly(&candidate, task, tc, opts),
        Level::Source => judge_source(&candidate, task, tc, opts),
    }
    .map_err(infra)
}

/// Writes rows with a serde-derived header; `header` is used when empty.
fn write_csv<T: Serialize>(rows: impl IntoIterator<Item = T>, path: &Path, header: &[&str]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut any = false;
    for r in rows {
        w.serialize(r)?;
        any = true;
    }
    if !any {
        w.write_record(header)?;
    }
    w.flush()?;
    Ok(())
}

/// Judges every bench task against the candidates directory and writes the
/// verdict stream, metrics and plot tables into `out`.
pub fn run_eval(
    bench: &[BenchRecord],
    candidates: &Path,
    level: Level,
    tc: &Toolchain,
    opts: &JudgeOptions,
    parallelism: usize,
    out: &Path,
) -> Result<EvalReport, EvalError> {
    fs::create_dir_all(out)?;
    let results = parallel_map(bench, parallelism, |task| {
        let r = judge_one(task, candidates, level, tc, opts);
        match &r {
            Ok(v) => tracing::info!(stage = %"eval", task = %v.task_id, compiled = v.compiled, matched = v.output_match),
            Err(f) => tracing::warn!(stage = %"eval", task = %f.task_id, infra_error = %f.message),
        }
        r
    });
    let (mut verdicts, mut infra) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(v) => verdicts.push(v),
            Err(f) => infra.push(f),
        }
    }
    write_jsonl(&verdicts, &out.join("verdicts.jsonl"))?;
    write_jsonl(&infra, &out.join("infra_errors.jsonl"))?;
    let mut metrics = aggregate_metrics(&verdicts)?;
    metrics.infra_errors = infra.len();
    fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&metrics)? + "\n")?;
    write_csv(&metrics.errors, &out.join("errors.csv"), &["category", "tasks"])?;
    write_csv(&metrics.strata, &out.join("strata.csv"), &["stratum", "tasks", "matched", "accuracy"])?;
    write_csv(&metrics.features, &out.join("failure_features.csv"), &["tag", "failed_with_tag", "failed_total", "percent"])?;
    write_csv(&metrics.domains, &out.join("domains.csv"), &["domain", "tasks", "failed"])?;
    #[derive(Serialize)]
    struct Delta<'a> {
        task_id: &'a str,
        delta: f64,
    }
    let deltas = |f: fn(&EvalVerdict) -> Option<f64>| {
        verdicts.iter().filter_map(move |v| f(v).map(|delta| Delta { task_id: &v.task_id, delta })).collect::<Vec<_>>()
    };
    write_csv(deltas(|v| v.runtime_delta), &out.join("runtime_delta.csv"), &["task_id", "delta"])?;
    write_csv(deltas(|v| v.memory_delta), &out.join("memory_delta.csv"), &["task_id", "delta"])?;
    Ok(EvalReport { verdicts, infra, metrics })
}
