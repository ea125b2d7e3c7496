use std::path::{Path, PathBuf};
use std::time::Duration;

use super::profile::{profile_pair, DEFAULT_REPETITIONS};
use super::{classify_compile_error, feature_tags, EvalError, EvalVerdict, Level, Progress, TaskLabels};
use crate::analyze::chrf2;
use crate::buildfarm::{
    compile_hip, link_deferred, run_executable, ArtifactKind, BuildError, CompileOutcome, ExecutionTrace, Toolchain,
    DEFAULT_TIMEOUT,
};
use crate::corpus::{BenchRecord, LengthStratum};
use crate::ingest::Lang;

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOptions {
    /// Scratch root; each judgement writes under its own task subdirectory.
    pub work_dir: PathBuf,
    pub repetitions: usize,
    pub timeout: Duration,
    /// Also build the reference and report runtime/memory deltas.
    pub profile: bool,
    /// Also report a whitespace-insensitive match next to the strict one.
    pub normalized_mode: bool,
}

impl JudgeOptions {
    pub fn new(work_dir: impl Into<PathBuf>) -> JudgeOptions {
        JudgeOptions {
            work_dir: work_dir.into(),
            repetitions: DEFAULT_REPETITIONS,
            timeout: DEFAULT_TIMEOUT,
            profile: true,
            normalized_mode: false,
        }
    }
}

fn strip_one_newline(b: &[u8]) -> &[u8] {
    b.strip_suffix(b"\n").unwrap_or(b)
}

/// Byte equality after dropping at most one trailing newline from each side.
pub fn outputs_match(actual: &[u8], expected: &[u8]) -> bool {
    strip_one_newline(actual) == strip_one_newline(expected)
}

/// Equality of whitespace-separated words.
pub fn outputs_match_normalized(actual: &[u8], expected: &[u8]) -> bool {
    actual.split(u8::is_ascii_whitespace).filter(|w| !w.is_empty()).eq(expected.split(u8::is_ascii_whitespace).filter(|w| !w.is_empty()))
}

fn labels(task: &BenchRecord, level: Level) -> TaskLabels {
    let r = &task.record;
    TaskLabels {
        task_id: r.id.clone(),
        level,
        stratum: LengthStratum::of(r.sass.token_count),
        domain: r.domain.name,
        feature_tags: r.cuda_src.as_ref().map(|s| feature_tags(&s.text)).unwrap_or_default(),
    }
}

/// Splits a build result into "judgeable" and "infrastructure" outcomes.
fn built(result: Result<CompileOutcome, BuildError>) -> Result<Result<CompileOutcome, Progress>, EvalError> {
    match result {
        Ok(o) => Ok(Ok(o)),
        Err(e) if !e.is_infrastructure() => {
            let diag = e.diagnostics().map(str::to_string).unwrap_or_else(|| e.to_string());
            Ok(Err(Progress::CompileFailed(classify_compile_error(&diag))))
        }
        Err(e) => Err(EvalError::Infra(e)),
    }
}

fn executable(o: &CompileOutcome) -> Result<PathBuf, EvalError> {
    o.path(ArtifactKind::Executable)
        .filter(|p| p.exists())
        .ok_or_else(|| EvalError::Infra(BuildError::Spec("build succeeded without an executable".into())))
}

fn progress_of(traces: &[ExecutionTrace], task: &BenchRecord, opts: &JudgeOptions) -> Progress {
    let ran = !traces.is_empty() && traces.iter().all(|t| t.exit_code == 0 && !t.timed_out);
    if !ran {
        return Progress::RunFailed;
    }
    Progress::Ran {
        output_match: traces.iter().all(|t| outputs_match(&t.stdout, &task.expected_stdout)),
        normalized_match: opts
            .normalized_mode
            .then(|| traces.iter().all(|t| outputs_match_normalized(&t.stdout, &task.expected_stdout))),
    }
}

/// Runs the candidate and, when profiling, the reference built by `reference`.
fn execute<F>(tc: &Toolchain, exe: &Path, task: &BenchRecord, opts: &JudgeOptions, reference: F) -> Result<(Progress, Option<super::Profile>), EvalError>
where
    F: FnOnce() -> Result<CompileOutcome, BuildError>,
{
    let reps = opts.repetitions.max(1);
    if opts.profile {
        let reference = reference().map_err(EvalError::Infra)?;
        let ref_exe = executable(&reference)?;
        let p = profile_pair(tc, exe, &ref_exe, &task.run_args, reps, opts.timeout)?;
        Ok((progress_of(&p.candidate, task, opts), Some(p)))
    } else {
        let traces = run_executable(tc, exe, &task.run_args, opts.timeout, reps)?;
        Ok((progress_of(&traces, task, opts), None))
    }
}

fn finish(labels: TaskLabels, progress: Progress, profile: Option<super::Profile>, chrf: Option<crate::analyze::ChrfScore>) -> EvalVerdict {
    let matched = matches!(progress, Progress::Ran { output_match: true, .. });
    let v = EvalVerdict::new(labels, progress, chrf);
    // deltas are only meaningful for a faithful translation
    match profile {
        Some(p) if matched => v.with_profile(&p),
        _ => v,
    }
}

/// Judges a candidate RDNA3 assembly by relinking it with the task's AMD host
/// assembly through the deferred-embedding path.
pub fn judge_assembly(candidate: &str, task: &BenchRecord, tc: &Toolchain, opts: &JudgeOptions) -> Result<EvalVerdict, EvalError> {
    let r = &task.record;
    let host = r.x86_amd.as_ref().ok_or_else(|| EvalError::Task {
        task_id: r.id.clone(),
        message: "no AMD host assembly to link against".into(),
    })?;
    let labels = labels(task, Level::Assembly);
    let chrf = Some(chrf2(&r.rdna3.text, candidate));
    let work = opts.work_dir.join(&r.id);
    let outcome = match built(link_deferred(&host.text, candidate, tc, &work, "candidate"))? {
        Ok(o) => o,
        Err(p) => return Ok(EvalVerdict::new(labels, p, chrf)),
    };
    let exe = executable(&outcome)?;
    let (progress, profile) = execute(tc, &exe, task, opts, || link_deferred(&host.text, &r.rdna3.text, tc, &work, "reference"))?;
    Ok(finish(labels, progress, profile, chrf))
}

/// Judges a candidate HIP source through the single-pass HIP build.
pub fn judge_source(candidate: &str, task: &BenchRecord, tc: &Toolchain, opts: &JudgeOptions) -> Result<EvalVerdict, EvalError> {
    let r = &task.record;
    let hip = r.hip_src.as_ref().ok_or_else(|| EvalError::Task {
        task_id: r.id.clone(),
        message: "no HIP source to take provenance from".into(),
    })?;
    let labels = labels(task, Level::Source);
    let work = opts.work_dir.join(&r.id);
    let unit = hip.derive(Lang::Hip, candidate, hip.relative_path.clone());
    let outcome = match built(compile_hip(&unit, tc, &work.join("candidate"), false))? {
        Ok(o) => o,
        Err(p) => return Ok(EvalVerdict::new(labels, p, None)),
    };
    let exe = executable(&outcome)?;
    let (progress, profile) = execute(tc, &exe, task, opts, || compile_hip(hip, tc, &work.join("reference"), false))?;
    Ok(finish(labels, progress, profile, None))
}
