//! Flag-driven forms of the stage commands, usable without a pipeline config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use forge_core::analyze::{corpus_stats, CategoryTable};
use forge_core::buildfarm::{
    compile_cuda, compile_hip, compile_opencl, hipify_translate, run_executable, ArtifactKind, BuildError, ExecutionTrace,
    MockScript, Toolchain, ToolchainName, ToolchainSpec, DEFAULT_TIMEOUT,
};
use forge_core::corpus::{read_jsonl, write_jsonl, BenchRecord, CorpusRecord};
use forge_core::evalharness::{run_eval, JudgeOptions, Level};
use forge_core::ingest::{ingest_repositories, read_metadata_csv, write_manifest, FilterConfig, Lang, SourceUnit};
use forge_core::pipeline::{TranslatePair, TranslateStatus};
use forge_core::pool::parallel_map;
use forge_core::synthgen::{
    collect_outputs, generate_batch, parse_domains, parse_templates, BatchConfig, ChatEndpoint, HttpEndpoint,
    DEFAULT_DOMAINS, DEFAULT_TEMPLATES,
};
use serde::Serialize;

const DEFAULT_PARALLELISM: usize = 4;

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().with_context(|| format!("{flag} is required without --config"))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Resolves `--spec`: a builtin flavour name, `mock`, or a spec TOML file.
fn toolchain(spec: &str, emulate: ToolchainName, arch: Option<&str>, script: Option<&Path>) -> Result<Toolchain> {
    let default_arch = |n: ToolchainName| match n {
        ToolchainName::Amd | ToolchainName::OpenclAmd => "gfx1100",
        _ => "sm_80",
    };
    let spec = match ToolchainName::parse(spec) {
        Some(ToolchainName::Mock) => ToolchainSpec::mock(emulate, arch.unwrap_or(default_arch(emulate))),
        Some(name) => ToolchainSpec::for_name(name, arch.unwrap_or(default_arch(name))),
        None => {
            let text = fs::read_to_string(spec).with_context(|| format!("reading spec {spec}"))?;
            let s: ToolchainSpec = toml::from_str(&text).with_context(|| format!("parsing spec {spec}"))?;
            s.validate()?;
            s
        }
    };
    let mut tc = Toolchain::new(spec);
    if let Some(p) = script {
        tc = tc.with_script(MockScript::load(p)?);
    }
    Ok(tc)
}

#[derive(Args, Debug, Default)]
pub struct IngestArgs {
    /// Directory holding one subdirectory per repository.
    #[arg(long)]
    repos: Option<PathBuf>,
    /// CSV with header `repo_id,cuda_file_count`.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Keep the N repositories with the most CUDA files.
    #[arg(long)]
    limit: Option<usize>,
    /// Manifest JSONL to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
    parallelism: usize,
}

pub fn ingest(a: &IngestArgs, dry_run: bool) -> Result<bool> {
    let repos = required(&a.repos, "--repos")?;
    let metadata = read_metadata_csv(required(&a.metadata, "--metadata")?)?;
    let out = required(&a.out, "--out")?;
    let rules = FilterConfig::default().compile()?;
    let (entries, report) = ingest_repositories(repos, &metadata, a.limit.unwrap_or(usize::MAX), &rules, a.parallelism)?;
    if !dry_run {
        write_manifest(out, &entries)?;
    }
    print_json(&report)?;
    Ok(true)
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    /// Template table; the built-in set when omitted.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Placeholder domain table; the built-in set when omitted.
    #[arg(long)]
    domains: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n_per_template: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; existing outputs are kept and skipped.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    model: String,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
    concurrency: usize,
}

pub fn synthgen(a: &SynthArgs, dry_run: bool) -> Result<bool> {
    let read = |p: &Option<PathBuf>, default: &str| -> Result<String> {
        Ok(match p {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => default.to_string(),
        })
    };
    let templates = parse_templates(&read(&a.templates, DEFAULT_TEMPLATES)?)?;
    let domains = parse_domains(&read(&a.domains, DEFAULT_DOMAINS)?)?;
    let mut cfg = BatchConfig::new(templates, domains, required(&a.out, "--out")?);
    cfg.n_per_template = a.n_per_template;
    cfg.seed = a.seed;
    cfg.concurrency = a.concurrency.max(1);
    cfg.dry_run = dry_run;
    let endpoint = if dry_run { None } else { Some(HttpEndpoint::from_env(a.model.clone(), a.temperature)?) };
    let (summary, _) = generate_batch(&cfg, endpoint.as_ref().map(|e| e as &dyn ChatEndpoint))?;
    let collected = if dry_run { 0 } else { collect_outputs(&cfg.out_dir)?.len() };
    print_json(&serde_json::json!({ "summary": summary, "collected": collected }))?;
    Ok(summary.failed == 0)
}

#[derive(Args, Debug, Default)]
pub struct AnalyzeArgs {
    /// Corpus JSONL.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Directory for the CSV tables.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn analyze(a: &AnalyzeArgs, dry_run: bool) -> Result<bool> {
    let records: Vec<CorpusRecord> = read_jsonl(required(&a.input, "--in")?)?;
    let out = required(&a.out_dir, "--out-dir")?;
    let stats = corpus_stats(&records, CategoryTable::builtin());
    if !dry_run {
        fs::create_dir_all(out)?;
        stats.write_csvs(out)?;
    }
    print_json(&stats.loc_summary)?;
    Ok(true)
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LevelArg {
    Source,
    Assembly,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::Source => Level::Source,
            LevelArg::Assembly => Level::Assembly,
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    /// Bench JSONL.
    #[arg(long)]
    bench: Option<PathBuf>,
    /// Directory of `<task_id>.s` or `<task_id>.hip` candidates.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long, value_enum)]
    level: Option<LevelArg>,
    /// `amd`, `mock`, or a spec TOML file.
    #[arg(long, default_value = "amd")]
    spec: String,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    /// Skip building and timing the reference.
    #[arg(long)]
    no_profile: bool,
    /// Also report whitespace-insensitive matches.
    #[arg(long)]
    normalized: bool,
    #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
    parallelism: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval(a: &EvalArgs, dry_run: bool) -> Result<bool> {
    let bench: Vec<BenchRecord> = read_jsonl(required(&a.bench, "--bench")?)?;
    let candidates = required(&a.candidates, "--candidates")?;
    let level: Level = (*required(&a.level, "--level")?).into();
    let out = required(&a.out, "--out")?;
    let tc = toolchain(&a.spec, ToolchainName::Amd, a.arch.as_deref(), a.mock_script.as_deref())?;
    if dry_run {
        let present = bench.iter().filter(|b| candidates.join(format!("{}.{}", b.record.id, level.extension())).is_file()).count();
        print_json(&serde_json::json!({ "tasks": bench.len(), "candidates_present": present }))?;
        return Ok(true);
    }
    let opts = JudgeOptions {
        repetitions: a.reps,
        timeout: Duration::from_secs(a.timeout_secs),
        profile: !a.no_profile,
        normalized_mode: a.normalized,
        ..JudgeOptions::new(out.join("work"))
    };
    let report = run_eval(&bench, candidates, level, &tc, &opts, a.parallelism, out)?;
    let _ = fs::remove_dir_all(out.join("work"));
    print_json(&report.metrics)?;
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BuildStage {
    Translate,
    Compile,
    Run,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Flavour {
    Nvidia,
    Amd,
    OpenclNvidia,
    OpenclAmd,
}

impl From<Flavour> for ToolchainName {
    fn from(f: Flavour) -> ToolchainName {
        match f {
            Flavour::Nvidia => ToolchainName::Nvidia,
            Flavour::Amd => ToolchainName::Amd,
            Flavour::OpenclNvidia => ToolchainName::OpenclNvidia,
            Flavour::OpenclAmd => ToolchainName::OpenclAmd,
        }
    }
}

#[derive(Args, Debug)]
pub struct BuildfarmArgs {
    /// `nvidia`, `amd`, `opencl_nvidia`, `opencl_amd`, `mock`, or a spec TOML file.
    #[arg(long)]
    spec: String,
    /// Flavour the mock backend emulates.
    #[arg(long, value_enum, default_value = "amd")]
    emulate: Flavour,
    #[arg(long, value_enum)]
    stage: BuildStage,
    /// Input JSONL: source units or manifest entries for translate/compile,
    /// the output of `--stage compile` for run.
    #[arg(long)]
    manifest: PathBuf,
    /// Scratch and output directory.
    #[arg(long)]
    work: PathBuf,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs())]
    timeout_secs: u64,
    #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
    parallelism: usize,
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct Built {
    id: String,
    ok: bool,
    diagnostics: String,
    /// Relative to `--work`.
    artifacts: BTreeMap<ArtifactKind, PathBuf>,
}

#[derive(Debug, Serialize)]
struct Ran {
    id: String,
    traces: Vec<ExecutionTrace>,
}

/// Source units from a manifest, translate output or plain unit JSONL.
/// Rejected manifest entries are skipped; translate pairs yield their HIP
/// unit when one exists.
fn read_units(path: &Path, prefer_hip: bool) -> Result<Vec<SourceUnit>> {
    let rows: Vec<serde_json::Value> = read_jsonl(path)?;
    let mut out = Vec::new();
    for row in rows {
        if row.pointer("/verdict/keep") == Some(&serde_json::Value::Bool(false)) {
            continue;
        }
        if row.get("source").is_some() {
            let pair: TranslatePair = serde_json::from_value(row)?;
            match (prefer_hip, pair.hip) {
                (true, Some(hip)) => out.push(hip),
                (_, _) if pair.translate == TranslateStatus::Failed => {}
                _ => out.push(pair.source),
            }
        } else {
            out.push(serde_json::from_value(row)?);
        }
    }
    Ok(out)
}

pub fn buildfarm(a: &BuildfarmArgs, dry_run: bool) -> Result<bool> {
    let tc = toolchain(&a.spec, a.emulate.into(), a.arch.as_deref(), a.mock_script.as_deref())?;
    let flavour = tc.spec.flavour();
    fs::create_dir_all(&a.work)?;
    let mut infra = Vec::new();
    match a.stage {
        BuildStage::Translate => {
            let units = read_units(&a.manifest, false)?;
            if dry_run {
                print_json(&serde_json::json!({ "units": units.len() }))?;
                return Ok(true);
            }
            let work = a.work.join("scratch");
            let results = parallel_map(&units, a.parallelism, |u| match u.lang {
                Lang::Cuda => match hipify_translate(u, &tc, &work) {
                    Ok(h) => Ok(TranslatePair { source: u.clone(), hip: Some(h), translate: TranslateStatus::Ok, diagnostics: None }),
                    Err(BuildError::TranslateFailed { diagnostics }) => {
                        Ok(TranslatePair { source: u.clone(), hip: None, translate: TranslateStatus::Failed, diagnostics: Some(diagnostics) })
                    }
                    Err(e) => Err(e),
                },
                _ => Ok(TranslatePair { source: u.clone(), hip: None, translate: TranslateStatus::NotApplicable, diagnostics: None }),
            });
            let mut pairs = Vec::new();
            for r in results {
                match r {
                    Ok(p) => pairs.push(p),
                    Err(e) => infra.push(e.to_string()),
                }
            }
            write_jsonl(&pairs, &a.work.join("translated.jsonl"))?;
            let ok = pairs.iter().filter(|p| p.translate == TranslateStatus::Ok).count();
            print_json(&serde_json::json!({ "units": units.len(), "translated": ok, "infra_errors": infra }))?;
        }
        BuildStage::Compile => {
            let units = read_units(&a.manifest, flavour == ToolchainName::Amd)?;
            if dry_run {
                print_json(&serde_json::json!({ "units": units.len() }))?;
                return Ok(true);
            }
            let results = parallel_map(&units, a.parallelism, |u| {
                let work = a.work.join(&u.id);
                let r = match u.lang {
                    Lang::Opencl => compile_opencl(u, &tc, &work),
                    Lang::Hip => compile_hip(u, &tc, &work, true),
                    Lang::Cuda => compile_cuda(u, &tc, &work),
                };
                (u.id.clone(), r)
            });
            let mut built = Vec::new();
            for (id, r) in results {
                match r {
                    Ok(o) => {
                        let artifacts = o
                            .artifacts
                            .iter()
                            .map(|(k, p)| {
                                let abs = o.root.join(p);
                                (*k, abs.strip_prefix(&a.work).map(Path::to_path_buf).unwrap_or(abs))
                            })
                            .collect();
                        built.push(Built { id, ok: true, diagnostics: o.diagnostics, artifacts });
                    }
                    Err(e) if !e.is_infrastructure() => {
                        let diagnostics = e.diagnostics().map(str::to_string).unwrap_or_else(|| e.to_string());
                        built.push(Built { id, ok: false, diagnostics, artifacts: BTreeMap::new() });
                    }
                    Err(e) => infra.push(format!("{id}: {e}")),
                }
            }
            write_jsonl(&built, &a.work.join("compiled.jsonl"))?;
            let ok = built.iter().filter(|b| b.ok).count();
            print_json(&serde_json::json!({ "units": units.len(), "compiled": ok, "infra_errors": infra }))?;
        }
        BuildStage::Run => {
            let built: Vec<Built> = read_jsonl(&a.manifest)?;
            let base = a.manifest.parent().unwrap_or(Path::new("."));
            let exes: Vec<(String, PathBuf)> = built
                .iter()
                .filter_map(|b| b.artifacts.get(&ArtifactKind::Executable).map(|p| (b.id.clone(), base.join(p))))
                .collect();
            if dry_run {
                print_json(&serde_json::json!({ "executables": exes.len() }))?;
                return Ok(true);
            }
            let timeout = Duration::from_secs(a.timeout_secs);
            let mut runs = Vec::new();
            // repetitions of one executable stay sequential
            for (id, exe) in &exes {
                match run_executable(&tc, exe, &[], timeout, a.reps) {
                    Ok(traces) => runs.push(Ran { id: id.clone(), traces }),
                    Err(e) => infra.push(format!("{id}: {e}")),
                }
            }
            write_jsonl(&runs, &a.work.join("runs.jsonl"))?;
            print_json(&serde_json::json!({ "executables": exes.len(), "ran": runs.len(), "infra_errors": infra }))?;
        }
    }
    for e in &infra {
        tracing::error!(error = %e, "infrastructure failure");
    }
    Ok(infra.is_empty())
}
