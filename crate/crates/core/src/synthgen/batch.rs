use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::endpoint::{ChatEndpoint, EndpointError};
use super::extract::extract_code;
use super::templates::{expand_template, sample_bindings, Bindings, PlaceholderDomain, PromptTemplate};
use super::SynthError;
use crate::ingest::{has_kernel_definition, Lang, Origin, SourceUnit};
use crate::pool::parallel_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Done,
    Failed,
    SkippedExisting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub job_id: String,
    pub template_id: String,
    pub bindings: Bindings,
    pub prompt_text: String,
    pub status: JobStatus,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub templates: Vec<PromptTemplate>,
    pub domains: Vec<PlaceholderDomain>,
    pub n_per_template: usize,
    pub seed: u64,
    pub concurrency: usize,
    pub retry_limit: u32,
    /// First retry delay; doubles per attempt.
    pub backoff_base: Duration,
    pub out_dir: PathBuf,
    pub dry_run: bool,
}

impl BatchConfig {
    pub fn new(templates: Vec<PromptTemplate>, domains: Vec<PlaceholderDomain>, out_dir: impl Into<PathBuf>) -> Self {
        BatchConfig {
            templates,
            domains,
            n_per_template: 1,
            seed: 0,
            concurrency: 4,
            retry_limit: 3,
            backoff_base: Duration::from_secs(1),
            out_dir: out_dir.into(),
            dry_run: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub requested: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub skipped: usize,
    /// Planned prompts dropped because an identical prompt was already queued.
    pub duplicate_prompts: usize,
    pub endpoint_calls: usize,
}

/// Expands every template `n_per_template` times, dropping repeated prompts.
pub fn plan_jobs(cfg: &BatchConfig) -> Result<(Vec<GenerationJob>, usize), SynthError> {
    let mut seen = HashSet::new();
    let mut jobs = Vec::new();
    let mut dups = 0;
    for t in &cfg.templates {
        for i in 0..cfg.n_per_template {
            let job_seed = cfg.seed.wrapping_mul(1 << 20).wrapping_add(i as u64);
            let bindings = sample_bindings(t, &cfg.domains, job_seed)?;
            let prompt_text = expand_template(t, &bindings)?;
            if !seen.insert(prompt_text.clone()) {
                dups += 1;
                continue;
            }
            jobs.push(GenerationJob {
                job_id: format!("{}-{}-{:04}", t.template_id, cfg.seed, i),
                template_id: t.template_id.clone(),
                bindings,
                prompt_text,
                status: JobStatus::Pending,
                attempts: 0,
                last_error: None,
            });
        }
    }
    Ok((jobs, dups))
}

fn output_path(out_dir: &Path, job_id: &str) -> PathBuf {
    out_dir.join(format!("{job_id}.cu"))
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, text)?;
    fs::rename(tmp, path)
}

fn run_job(
    mut job: GenerationJob,
    cfg: &BatchConfig,
    endpoint: Option<&dyn ChatEndpoint>,
    calls: &AtomicUsize,
) -> Result<GenerationJob, SynthError> {
    let out = output_path(&cfg.out_dir, &job.job_id);
    if out.exists() {
        job.status = JobStatus::SkippedExisting;
        return Ok(job);
    }
    fs::write(cfg.out_dir.join("prompts").join(format!("{}.txt", job.job_id)), &job.prompt_text)?;
    let Some(endpoint) = endpoint.filter(|_| !cfg.dry_run) else {
        return Ok(job);
    };
    let raw_dir = cfg.out_dir.join("raw");
    while job.attempts < cfg.retry_limit {
        if job.attempts > 0 {
            std::thread::sleep(cfg.backoff_base.saturating_mul(1 << (job.attempts - 1).min(16)));
        }
        job.attempts += 1;
        calls.fetch_add(1, Ordering::Relaxed);
        let attempt = match endpoint.complete(&job.prompt_text) {
            Ok(reply) => {
                fs::write(raw_dir.join(format!("{}.{}.json", job.job_id, job.attempts)), &reply.raw)?;
                extract_code(&reply.content).and_then(|code| {
                    if has_kernel_definition(&code) {
                        Ok(code)
                    } else {
                        Err(SynthError::NoKernel)
                    }
                })
            }
            Err(e) => {
                fs::write(raw_dir.join(format!("{}.{}.err", job.job_id, job.attempts)), e.to_string())?;
                Err(SynthError::Endpoint(e))
            }
        };
        match attempt {
            Ok(code) => {
                let mut code = code;
                if !code.ends_with('\n') {
                    code.push('\n');
                }
                write_atomic(&out, &code)?;
                job.status = JobStatus::Done;
                job.last_error = None;
                return Ok(job);
            }
            Err(e) => {
                tracing::debug!(job = %job.job_id, attempt = job.attempts, error = %e, "generation attempt failed");
                job.last_error = Some(e.to_string());
            }
        }
    }
    job.status = JobStatus::Failed;
    Ok(job)
}

/// Runs (or resumes) a generation batch into `cfg.out_dir`.
///
/// Writes `<job_id>.cu` per success, `prompts/`, `raw/` (every endpoint
/// reply), `failures.jsonl` and `summary.json`. Jobs whose output already
/// exists are not re-requested. Dry-run jobs write prompts only and count
/// as skipped.
pub fn generate_batch(
    cfg: &BatchConfig,
    endpoint: Option<&dyn ChatEndpoint>,
) -> Result<(BatchSummary, Vec<GenerationJob>), SynthError> {
    if endpoint.is_none() && !cfg.dry_run {
        return Err(EndpointError::NotConfigured("no endpoint and dry_run unset").into());
    }
    fs::create_dir_all(cfg.out_dir.join("prompts"))?;
    fs::create_dir_all(cfg.out_dir.join("raw"))?;
    let (jobs, duplicate_prompts) = plan_jobs(cfg)?;
    let calls = AtomicUsize::new(0);
    let results = parallel_map(&jobs, cfg.concurrency.max(1), |job| run_job(job.clone(), cfg, endpoint, &calls));
    let jobs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut summary = BatchSummary {
        requested: jobs.len(),
        duplicate_prompts,
        endpoint_calls: calls.load(Ordering::Relaxed),
        ..BatchSummary::default()
    };
    let mut failures = String::new();
    for job in &jobs {
        match job.status {
            JobStatus::Done => summary.succeeded += 1,
            JobStatus::Failed => {
                summary.failed += 1;
                failures.push_str(&serde_json::to_string(job)?);
                failures.push('\n');
            }
            JobStatus::SkippedExisting | JobStatus::Pending => summary.skipped += 1,
        }
    }
    fs::write(cfg.out_dir.join("failures.jsonl"), failures)?;
    fs::write(cfg.out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok((summary, jobs))
}

/// Loads generated `.cu` files as synthetic source units, sorted by name.
pub fn collect_outputs(out_dir: &Path) -> Result<Vec<SourceUnit>, SynthError> {
    let mut names: Vec<_> = fs::read_dir(out_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "cu"))
        .collect();
    names.sort();
    let mut out = Vec::new();
    for p in names {
        let text = fs::read_to_string(&p)?;
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        out.push(SourceUnit::new(Origin::Synthetic, Lang::Cuda, text, name, None, None));
    }
    Ok(out)
}
