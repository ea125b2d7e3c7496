//! Differential judging of candidate translations and benchmark metrics.

mod driver;
mod errors;
mod features;
mod judge;
mod metrics;
mod profile;
mod prompts;

pub use driver::{load_candidate, run_eval, EvalReport, InfraFailure};
pub use errors::{classify_compile_error, ErrorCategory, ErrorKind, ErrorRules, DEFAULT_ERROR_RULES};
pub use features::{feature_tags, FeatureTag};
pub use judge::{judge_assembly, judge_source, outputs_match, outputs_match_normalized, JudgeOptions};
pub use metrics::{aggregate_metrics, DomainFailures, ErrorCount, FeatureRow, MetricsTable, Rate, StratumRow};
pub use profile::{profile_pair, Profile, DEFAULT_REPETITIONS, HALF_SECOND};
pub use prompts::{build_baseline_prompt, ASSEMBLY_LABELS, ASSEMBLY_PROMPT, SOURCE_LABELS, SOURCE_PROMPT};

use serde::{Deserialize, Serialize};

use crate::analyze::{ChrfScore, Domain};
use crate::buildfarm::BuildError;
use crate::corpus::LengthStratum;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no verdicts to aggregate")]
    EmptyRun,
    #[error("infrastructure: {0}")]
    Infra(#[from] BuildError),
    #[error("task {task_id}: {message}")]
    Task { task_id: String, message: String },
    #[error("error rules line {line}: {message}")]
    Rules { line: usize, message: String },
    #[error("corpus: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Source,
    Assembly,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Source => "source",
            Level::Assembly => "assembly",
        }
    }

    pub fn parse(s: &str) -> Option<Level> {
        match s {
            "source" => Some(Level::Source),
            "assembly" => Some(Level::Assembly),
            _ => None,
        }
    }

    /// Candidate file extension in a candidates directory.
    pub fn extension(self) -> &'static str {
        match self {
            Level::Source => "hip",
            Level::Assembly => "s",
        }
    }
}

/// How far a candidate got.
#[derive(Debug, Clone, PartialEq)]
pub enum Progress {
    CompileFailed(Vec<ErrorCategory>),
    RunFailed,
    Ran { output_match: bool, normalized_match: Option<bool> },
}

/// Judgement for one task.
///
/// Built from a [`Progress`], so `output_match ⇒ executed ⇒ compiled` and
/// "categories present iff not compiled" hold by construction; deserialising
/// rejects rows that break them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VerdictWire")]
pub struct EvalVerdict {
    pub task_id: String,
    pub level: Level,
    pub compiled: bool,
    pub executed: bool,
    pub output_match: bool,
    /// Whitespace-insensitive match, only when that mode is enabled.
    pub normalized_match: Option<bool>,
    pub error_categories: Vec<ErrorCategory>,
    pub chrf: Option<ChrfScore>,
    /// Mean seconds, candidate minus reference.
    pub runtime_delta: Option<f64>,
    /// Mean peak RSS in MiB, candidate minus reference.
    pub memory_delta: Option<f64>,
    pub within_half_second: Option<bool>,
    pub stratum: LengthStratum,
    pub domain: Domain,
    pub feature_tags: Vec<FeatureTag>,
}

/// Task-side labels copied into every verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLabels {
    pub task_id: String,
    pub level: Level,
    pub stratum: LengthStratum,
    pub domain: Domain,
    pub feature_tags: Vec<FeatureTag>,
}

impl EvalVerdict {
    pub fn new(labels: TaskLabels, progress: Progress, chrf: Option<ChrfScore>) -> EvalVerdict {
        let (compiled, executed, output_match, normalized_match, error_categories) = match progress {
            Progress::CompileFailed(cats) => {
                let cats = if cats.is_empty() {
                    vec![ErrorCategory { name: ErrorKind::Other, matched_diagnostic: String::new() }]
                } else {
                    cats
                };
                (false, false, false, None, cats)
            }
            Progress::RunFailed => (true, false, false, None, Vec::new()),
            Progress::Ran { output_match, normalized_match } => (true, true, output_match, normalized_match, Vec::new()),
        };
        EvalVerdict {
            task_id: labels.task_id,
            level: labels.level,
            compiled,
            executed,
            output_match,
            normalized_match,
            error_categories,
            chrf,
            runtime_delta: None,
            memory_delta: None,
            within_half_second: None,
            stratum: labels.stratum,
            domain: labels.domain,
            feature_tags: labels.feature_tags,
        }
    }

    pub fn with_profile(mut self, p: &Profile) -> EvalVerdict {
        self.runtime_delta = p.runtime_delta;
        self.memory_delta = p.memory_delta;
        self.within_half_second = p.within_half_second;
        self
    }

    fn check(&self) -> Result<(), String> {
        if self.output_match && !self.executed {
            return Err("output_match without executed".into());
        }
        if self.executed && !self.compiled {
            return Err("executed without compiled".into());
        }
        if self.error_categories.is_empty() == !self.compiled {
            return Err("error_categories must be non-empty exactly when not compiled".into());
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct VerdictWire {
    task_id: String,
    level: Level,
    compiled: bool,
    executed: bool,
    output_match: bool,
    normalized_match: Option<bool>,
    error_categories: Vec<ErrorCategory>,
    chrf: Option<ChrfScore>,
    runtime_delta: Option<f64>,
    memory_delta: Option<f64>,
    within_half_second: Option<bool>,
    stratum: LengthStratum,
    domain: Domain,
    feature_tags: Vec<FeatureTag>,
}

impl TryFrom<VerdictWire> for EvalVerdict {
    type Error = String;

    fn try_from(w: VerdictWire) -> Result<Self, String> {
        let v = EvalVerdict {
            task_id: w.task_id,
            level: w.level,
            compiled: w.compiled,
            executed: w.executed,
            output_match: w.output_match,
            normalized_match: w.normalized_match,
            error_categories: w.error_categories,
            chrf: w.chrf,
            runtime_delta: w.runtime_delta,
            memory_delta: w.memory_delta,
            within_half_second: w.within_half_second,
            stratum: w.stratum,
            domain: w.domain,
            feature_tags: w.feature_tags,
        };
        v.check()?;
        Ok(v)
    }
}
