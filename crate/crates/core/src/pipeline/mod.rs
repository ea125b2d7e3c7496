//! The stage DAG with content-hash stamps, so completed stages rerun as no-ops.

mod config;
mod stages;

pub use config::{
    interpolate, BenchSection, EvalSection, ExtractSection, IngestSection, PipelineConfig, SynthSection, ToolchainMode,
    ToolchainSection,
};
pub use stages::{CompileResult, SideBuild, TranslatePair, TranslateStatus};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::text::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage `{stage}` needs `{upstream}` to have completed first")]
    MissingUpstream { stage: Stage, upstream: String },
    #[error("config: {0}")]
    Config(String),
    #[error("config field `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("ingest: {0}")]
    Ingest(#[from] crate::ingest::IngestError),
    #[error("synthgen: {0}")]
    Synth(#[from] crate::synthgen::SynthError),
    #[error("buildfarm: {0}")]
    Build(#[from] crate::buildfarm::BuildError),
    #[error("asm: {0}")]
    Asm(#[from] crate::asmproc::AsmError),
    #[error("corpus: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("analyze: {0}")]
    Analyze(#[from] crate::analyze::AnalyzeError),
    #[error("eval: {0}")]
    Eval(#[from] crate::evalharness::EvalError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Synthgen,
    Translate,
    Compile,
    Extract,
    Align,
    Analyze,
    Bench,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Synthgen,
        Stage::Translate,
        Stage::Compile,
        Stage::Extract,
        Stage::Align,
        Stage::Analyze,
        Stage::Bench,
        Stage::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Synthgen => "synthgen",
            Stage::Translate => "translate",
            Stage::Compile => "compile",
            Stage::Extract => "extract",
            Stage::Align => "align",
            Stage::Analyze => "analyze",
            Stage::Bench => "bench",
            Stage::Eval => "eval",
        }
    }

    /// Upstream requirements: every inner list needs at least one completed member.
    pub fn upstream(self) -> &'static [&'static [Stage]] {
        match self {
            Stage::Ingest | Stage::Synthgen => &[],
            Stage::Translate => &[&[Stage::Ingest, Stage::Synthgen]],
            Stage::Compile => &[&[Stage::Translate]],
            Stage::Extract => &[&[Stage::Compile]],
            Stage::Align => &[&[Stage::Extract]],
            Stage::Analyze => &[&[Stage::Align]],
            Stage::Bench => &[&[Stage::Align], &[Stage::Compile]],
            Stage::Eval => &[&[Stage::Bench]],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Stage, String> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Written to `<stage>/report.json` after every run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Option<Stage>,
    pub cached: bool,
    pub duration_secs: f64,
    pub inputs: usize,
    pub outputs: usize,
    /// Per-reason attrition and other tallies.
    pub counts: BTreeMap<String, usize>,
    pub fatal_errors: Vec<String>,
}

impl StageReport {
    pub fn new(stage: Stage) -> StageReport {
        StageReport { stage: Some(stage), ..StageReport::default() }
    }

    pub fn bump(&mut self, key: &str) {
        *self.counts.entry(key.to_string()).or_default() += 1;
    }

    pub fn fatal(&mut self, message: impl Into<String>) {
        let m = message.into();
        if !self.fatal_errors.contains(&m) {
            self.fatal_errors.push(m);
        }
    }

    pub fn ok(&self) -> bool {
        self.fatal_errors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Stamp {
    stage: Stage,
    input_hash: String,
    output_hash: String,
}

const STAMP: &str = "stamp.json";
const REPORT: &str = "report.json";

pub fn stage_dir(cfg: &PipelineConfig, stage: Stage) -> PathBuf {
    cfg.workspace_dir().join(stage.as_str())
}

fn read_stamp(dir: &Path) -> Option<Stamp> {
    serde_json::from_str(&fs::read_to_string(dir.join(STAMP)).ok()?).ok()
}

/// Whether `stage` has a stamp whose outputs are still intact.
pub fn is_complete(cfg: &PipelineConfig, stage: Stage) -> bool {
    let dir = stage_dir(cfg, stage);
    read_stamp(&dir).is_some_and(|s| hash_outputs(&dir).is_ok_and(|h| h == s.output_hash))
}

/// Digest over every file under `dir` except the stamp and report.
fn hash_outputs(dir: &Path) -> Result<String, PipelineError> {
    hash_tree(dir, &[STAMP, REPORT])
}

/// Order-stable sha256 over relative paths and contents of every file under `dir`.
pub fn hash_tree(dir: &Path, skip_top: &[&str]) -> Result<String, PipelineError> {
    let mut h = Sha256::new();
    if dir.exists() {
        for entry in WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.map_err(|e| PipelineError::Io(e.into()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
            if rel.components().count() == 1 && skip_top.iter().any(|s| rel == Path::new(s)) {
                continue;
            }
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(sha256_hex(fs::read(entry.path())?).as_bytes());
            h.update([0]);
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// The inputs a stage's cache key covers: upstream output digests plus the
/// stage-specific config and external inputs.
fn input_hash(cfg: &PipelineConfig, stage: Stage, upstream: &[Stage]) -> Result<String, PipelineError> {
    let mut h = Sha256::new();
    h.update(stage.as_str());
    for up in upstream {
        if let Some(s) = read_stamp(&stage_dir(cfg, *up)) {
            h.update(up.as_str());
            h.update(s.output_hash);
        }
    }
    h.update(stages::stage_key(cfg, stage)?);
    Ok(hex::encode(h.finalize()))
}

fn completed_upstream(cfg: &PipelineConfig, stage: Stage) -> Result<Vec<Stage>, PipelineError> {
    let mut used = Vec::new();
    for group in stage.upstream() {
        let done: Vec<Stage> = group.iter().copied().filter(|s| is_complete(cfg, *s)).collect();
        if done.is_empty() {
            let names: Vec<&str> = group.iter().map(|s| s.as_str()).collect();
            return Err(PipelineError::MissingUpstream { stage, upstream: names.join(" or ") });
        }
        used.extend(done);
    }
    Ok(used)
}

/// The stored report of `stage` when its stamp matches `key` and its outputs are intact.
fn cached_report(stage: Stage, dir: &Path, key: &str) -> Result<Option<StageReport>, PipelineError> {
    let Some(stamp) = read_stamp(dir) else { return Ok(None) };
    if stamp.input_hash != key || hash_outputs(dir)? != stamp.output_hash {
        return Ok(None);
    }
    let mut report: StageReport = fs::read_to_string(dir.join(REPORT))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_else(|| StageReport::new(stage));
    report.cached = true;
    report.duration_secs = 0.0;
    Ok(Some(report))
}

/// What [`run_stage`] would do, without doing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StagePlan {
    pub stage: Stage,
    /// Upstream groups with no completed stage.
    pub missing_upstream: Option<String>,
    pub cached: bool,
}

pub fn plan_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StagePlan, PipelineError> {
    let upstream = match completed_upstream(cfg, stage) {
        Ok(u) => u,
        Err(PipelineError::MissingUpstream { upstream, .. }) => {
            return Ok(StagePlan { stage, missing_upstream: Some(upstream), cached: false })
        }
        Err(e) => return Err(e),
    };
    let key = input_hash(cfg, stage, &upstream)?;
    let cached = cached_report(stage, &stage_dir(cfg, stage), &key)?.is_some();
    Ok(StagePlan { stage, missing_upstream: None, cached })
}

/// Runs one stage, or returns its stored report marked cached when neither
/// its inputs nor its outputs changed since the last run.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageReport, PipelineError> {
    let upstream = completed_upstream(cfg, stage)?;
    let dir = stage_dir(cfg, stage);
    let key = input_hash(cfg, stage, &upstream)?;
    if let Some(report) = cached_report(stage, &dir, &key)? {
        tracing::info!(stage = %stage, outcome = "cached");
        return Ok(report);
    }
    clear_stage_dir(stage, &dir)?;
    let start = Instant::now();
    let mut report = StageReport::new(stage);
    stages::run(stage, cfg, &upstream, &dir, &mut report)?;
    report.duration_secs = start.elapsed().as_secs_f64();
    fs::write(dir.join(REPORT), serde_json::to_string_pretty(&report)? + "\n")?;
    if report.ok() {
        let stamp = Stamp { stage, input_hash: key, output_hash: hash_outputs(&dir)? };
        fs::write(dir.join(STAMP), serde_json::to_string_pretty(&stamp)? + "\n")?;
    }
    tracing::info!(stage = %stage, outcome = if report.ok() { "done" } else { "fatal" }, outputs = report.outputs, secs = report.duration_secs);
    Ok(report)
}

/// Empties a stage directory before a fresh run. Synthgen keeps its
/// generated files so an interrupted batch resumes.
fn clear_stage_dir(stage: Stage, dir: &Path) -> Result<(), PipelineError> {
    if dir.exists() {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if stage == Stage::Synthgen && path.file_name().is_some_and(|n| n == stages::SYNTH_OUT) {
                continue;
            }
            if path.is_dir() {
                fs::remove_dir_all(&path)?;
            } else {
                fs::remove_file(&path)?;
            }
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Runs `stages` in order, stopping at the first report with fatal errors.
pub fn run_stages(stages: &[Stage], cfg: &PipelineConfig) -> Result<Vec<StageReport>, PipelineError> {
    let mut out = Vec::new();
    for &s in stages {
        let r = run_stage(s, cfg)?;
        let ok = r.ok();
        out.push(r);
        if !ok {
            break;
        }
    }
    Ok(out)
}
