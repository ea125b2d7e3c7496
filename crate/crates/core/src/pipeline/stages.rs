use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::{hash_tree, stage_dir, PipelineConfig, PipelineError, Stage, StageReport};
use crate::analyze::{corpus_stats, CategoryTable, KeywordTable};
use crate::asmproc::{normalize_sass, passthrough_rdna3, AsmError, AssemblyArtifact, Isa, Splitter, Tier, Vendor};
use crate::buildfarm::{
    compile_cuda, compile_hip, compile_opencl, hipify_translate, run_executable, ArtifactKind, BuildError, CompileOutcome,
    Toolchain, ToolchainName,
};
use crate::corpus::{
    align_record, curate_bench, emit_jsonl, read_jsonl, record_hash, write_jsonl, AlignOutcome, ArchTags, ArtifactBundle,
    BenchRecord, CorpusRecord, CurateConfig, TrainIndex, VendorSide,
};
use crate::evalharness::{outputs_match, run_eval, JudgeOptions};
use crate::ingest::{ingest_repositories, read_metadata_csv, write_manifest, Lang, Origin, RepoMeta, SourceUnit};
use crate::pool::parallel_map;
use crate::synthgen::{
    collect_outputs, dedup_synthetic, generate_batch, parse_domains, parse_templates, BatchConfig, ChatEndpoint,
    HttpEndpoint, DEFAULT_DOMAINS, DEFAULT_TEMPLATES,
};
use crate::text::sha256_hex;

const UNITS: &str = "units.jsonl";
const PAIRS: &str = "pairs.jsonl";
const RESULTS: &str = "results.jsonl";
const BUNDLES: &str = "bundles.jsonl";
const CORPUS: &str = "corpus.jsonl";
const BENCH: &str = "bench.jsonl";
const TRAIN: &str = "train.jsonl";
/// Synthgen keeps its generated files across runs so batches resume.
pub(super) const SYNTH_OUT: &str = "generated";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslateStatus {
    Ok,
    Failed,
    NotApplicable,
}

/// A source with its HIP translation, when one applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatePair {
    pub source: SourceUnit,
    pub hip: Option<SourceUnit>,
    pub translate: TranslateStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
}

/// One vendor's build; artifact paths are relative to the workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideBuild {
    pub ok: bool,
    pub diagnostics: String,
    pub artifacts: BTreeMap<ArtifactKind, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileResult {
    pub id: String,
    pub pair: TranslatePair,
    pub nvidia: Option<SideBuild>,
    pub amd: Option<SideBuild>,
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
        h.update([0]);
    }
    hex::encode(h.finalize())
}

fn file_digest(cfg: &PipelineConfig, p: &Option<PathBuf>) -> Result<String, PipelineError> {
    match p {
        Some(p) => Ok(sha256_hex(fs::read(cfg.resolve(p))?)),
        None => Ok(String::new()),
    }
}

fn toolchain_key(cfg: &PipelineConfig) -> Result<String, PipelineError> {
    let mut parts = vec![serde_json::to_string(&cfg.toolchain)?, file_digest(cfg, &cfg.toolchain.mock_script)?];
    for p in cfg.toolchain.specs.values() {
        parts.push(sha256_hex(fs::read(cfg.resolve(p))?));
    }
    Ok(parts.join("\0"))
}

/// Config and external inputs covered by a stage's cache key.
pub(super) fn stage_key(cfg: &PipelineConfig, stage: Stage) -> Result<String, PipelineError> {
    let key = match stage {
        Stage::Ingest => {
            let repos = match &cfg.ingest.repos_dir {
                Some(d) => hash_tree(&cfg.resolve(d), &[])?,
                None => String::new(),
            };
            digest(&[serde_json::to_string(&cfg.ingest)?.as_bytes(), repos.as_bytes(), file_digest(cfg, &cfg.ingest.metadata_csv)?.as_bytes()])
        }
        Stage::Synthgen => digest(&[
            serde_json::to_string(&cfg.synth)?.as_bytes(),
            &cfg.seed.to_le_bytes(),
            file_digest(cfg, &cfg.synth.templates)?.as_bytes(),
            file_digest(cfg, &cfg.synth.domains)?.as_bytes(),
        ]),
        Stage::Translate | Stage::Compile => toolchain_key(cfg)?,
        Stage::Extract => digest(&[serde_json::to_string(&cfg.extract)?.as_bytes(), serde_json::to_string(&cfg.toolchain)?.as_bytes()]),
        Stage::Align | Stage::Analyze => String::new(),
        Stage::Bench => digest(&[
            serde_json::to_string(&cfg.bench)?.as_bytes(),
            &cfg.seed.to_le_bytes(),
            toolchain_key(cfg)?.as_bytes(),
            file_digest(cfg, &cfg.bench.train)?.as_bytes(),
        ]),
        Stage::Eval => {
            let cands = match &cfg.eval.candidates {
                Some(d) => hash_tree(&cfg.resolve(d), &[])?,
                None => String::new(),
            };
            digest(&[serde_json::to_string(&cfg.eval)?.as_bytes(), toolchain_key(cfg)?.as_bytes(), cands.as_bytes()])
        }
    };
    Ok(key)
}

pub(super) fn run(stage: Stage, cfg: &PipelineConfig, upstream: &[Stage], dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    match stage {
        Stage::Ingest => ingest(cfg, dir, report),
        Stage::Synthgen => synthgen(cfg, dir, report),
        Stage::Translate => translate(cfg, upstream, dir, report),
        Stage::Compile => compile(cfg, dir, report),
        Stage::Extract => extract(cfg, dir, report),
        Stage::Align => align(cfg, dir, report),
        Stage::Analyze => analyze(cfg, dir, report),
        Stage::Bench => bench(cfg, dir, report),
        Stage::Eval => eval(cfg, dir, report),
    }
}

fn upstream_file(cfg: &PipelineConfig, stage: Stage, name: &str) -> PathBuf {
    stage_dir(cfg, stage).join(name)
}

fn discover_repos(root: &Path) -> Result<Vec<RepoMeta>, PipelineError> {
    let mut out = Vec::new();
    let mut dirs: Vec<_> = fs::read_dir(root)?.filter_map(|e| e.ok()).filter(|e| e.path().is_dir()).collect();
    dirs.sort_by_key(|e| e.file_name());
    for d in dirs {
        let count = WalkDir::new(d.path())
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().and_then(|x| x.to_str()).is_some_and(|x| x == "cu" || x == "cuh"))
            .count();
        out.push(RepoMeta { repo_id: d.file_name().to_string_lossy().into_owned(), cuda_file_count: count as u64, license: None });
    }
    Ok(out)
}

fn ingest(cfg: &PipelineConfig, dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let repos = cfg.ingest.repos_dir.as_ref().ok_or_else(|| PipelineError::Config("ingest.repos_dir is not set".into()))?;
    let repos = cfg.resolve(repos);
    let metadata = match &cfg.ingest.metadata_csv {
        Some(p) => read_metadata_csv(&cfg.resolve(p))?,
        None => discover_repos(&repos)?,
    };
    let rules = cfg.ingest.filter.compile()?;
    let limit = cfg.ingest.repo_limit.unwrap_or(usize::MAX);
    let (entries, ir) = ingest_repositories(&repos, &metadata, limit, &rules, cfg.parallelism)?;
    write_manifest(&dir.join("manifest.jsonl"), &entries)?;
    let kept: Vec<SourceUnit> = entries.into_iter().filter(|e| e.verdict.keep).map(|e| e.unit).collect();
    write_jsonl(&kept, &dir.join(UNITS))?;
    report.inputs = ir.scanned;
    report.outputs = kept.len();
    report.counts = ir.rejected.into_iter().map(|(k, v)| (format!("rejected_{k}"), v)).collect();
    report.counts.insert("missing_repos".into(), ir.missing_repos.len());
    Ok(())
}

fn read_text(cfg: &PipelineConfig, p: &Option<PathBuf>, default: &str) -> Result<String, PipelineError> {
    match p {
        Some(p) => Ok(fs::read_to_string(cfg.resolve(p))?),
        None => Ok(default.to_string()),
    }
}

fn synthgen(cfg: &PipelineConfig, dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let s = &cfg.synth;
    let templates = parse_templates(&read_text(cfg, &s.templates, DEFAULT_TEMPLATES)?)?;
    let domains = parse_domains(&read_text(cfg, &s.domains, DEFAULT_DOMAINS)?)?;
    let mut batch = BatchConfig::new(templates, domains, dir.join(SYNTH_OUT));
    batch.n_per_template = s.n_per_template;
    batch.seed = cfg.seed;
    batch.concurrency = s.concurrency.min(cfg.parallelism).max(1);
    batch.retry_limit = s.retry_limit;
    batch.backoff_base = Duration::from_millis(s.backoff_ms);
    batch.dry_run = s.dry_run;
    let endpoint = if s.dry_run {
        None
    } else {
        match HttpEndpoint::from_env(s.model.clone(), s.temperature) {
            Ok(e) => Some(e),
            Err(e) => {
                report.fatal(e.to_string());
                return Ok(());
            }
        }
    };
    let (summary, _) = generate_batch(&batch, endpoint.as_ref().map(|e| e as &dyn ChatEndpoint))?;
    let units = collect_outputs(&batch.out_dir)?;
    let generated = units.len();
    let units = dedup_synthetic(units, None, s.similarity);
    write_jsonl(&units, &dir.join(UNITS))?;
    report.inputs = summary.requested;
    report.outputs = units.len();
    for (k, v) in [
        ("succeeded", summary.succeeded),
        ("failed", summary.failed),
        ("skipped", summary.skipped),
        ("duplicate_prompts", summary.duplicate_prompts),
        ("endpoint_calls", summary.endpoint_calls),
        ("dedup_removed", generated - units.len()),
    ] {
        report.counts.insert(k.into(), v);
    }
    Ok(())
}

/// Records an infrastructure failure as fatal; input failures are data.
fn infra(report: &mut StageReport, e: &BuildError) {
    tracing::error!(error = %e, "infrastructure failure");
    report.fatal(e.to_string());
}

fn translate(cfg: &PipelineConfig, upstream: &[Stage], dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let mut units: Vec<SourceUnit> = Vec::new();
    for s in upstream {
        units.extend(read_jsonl::<SourceUnit>(&upstream_file(cfg, *s, UNITS))?);
    }
    let tc = cfg.toolchain(ToolchainName::Amd)?;
    let work = dir.join("work");
    let results = parallel_map(&units, cfg.parallelism, |u| match u.lang {
        Lang::Cuda => match hipify_translate(u, &tc, &work) {
            Ok(hip) => Ok(TranslatePair { source: u.clone(), hip: Some(hip), translate: TranslateStatus::Ok, diagnostics: None }),
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
            Ok(p) => {
                report.bump(match p.translate {
                    TranslateStatus::Ok => "translated",
                    TranslateStatus::Failed => "translate_failed",
                    TranslateStatus::NotApplicable => "not_applicable",
                });
                tracing::debug!(stage = %Stage::Translate, sample = %p.source.id, outcome = ?p.translate);
                pairs.push(p);
            }
            Err(e) => infra(report, &e),
        }
    }
    report.inputs = units.len();
    report.outputs = pairs.len();
    write_jsonl(&pairs, &dir.join(PAIRS))?;
    Ok(())
}

fn side(result: Result<CompileOutcome, BuildError>, workspace: &Path) -> Result<SideBuild, BuildError> {
    let rel = |o: &CompileOutcome| {
        o.artifacts
            .iter()
            .map(|(k, p)| {
                let abs = o.root.join(p);
                (*k, abs.strip_prefix(workspace).map(Path::to_path_buf).unwrap_or(abs))
            })
            .collect()
    };
    match result {
        Ok(o) => Ok(SideBuild { ok: true, diagnostics: o.diagnostics.clone(), artifacts: rel(&o) }),
        Err(BuildError::CompileFailed(o)) | Err(BuildError::RecombineFailed(o)) => {
            Ok(SideBuild { ok: false, diagnostics: o.diagnostics.clone(), artifacts: BTreeMap::new() })
        }
        Err(e) => Err(e),
    }
}

fn compile(cfg: &PipelineConfig, dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let pairs: Vec<TranslatePair> = read_jsonl(&upstream_file(cfg, Stage::Translate, PAIRS))?;
    let nv = cfg.toolchain(ToolchainName::Nvidia)?;
    let amd = cfg.toolchain(ToolchainName::Amd)?;
    let ocl_nv = cfg.toolchain(ToolchainName::OpenclNvidia)?;
    let ocl_amd = cfg.toolchain(ToolchainName::OpenclAmd)?;
    let ws = cfg.workspace_dir();
    let work = dir.join("work");
    let results = parallel_map(&pairs, cfg.parallelism, |p| -> Result<CompileResult, BuildError> {
        let (nvidia, amd_side) = match (p.translate, p.source.lang, &p.hip) {
            (TranslateStatus::Failed, _, _) => (None, None),
            (_, Lang::Opencl, _) => (
                Some(side(compile_opencl(&p.source, &ocl_nv, &work.join("nvidia")), &ws)?),
                Some(side(compile_opencl(&p.source, &ocl_amd, &work.join("amd")), &ws)?),
            ),
            (_, _, Some(hip)) => (
                Some(side(compile_cuda(&p.source, &nv, &work.join("nvidia")), &ws)?),
                Some(side(compile_hip(hip, &amd, &work.join("amd"), true), &ws)?),
            ),
            _ => (None, None),
        };
        Ok(CompileResult { id: p.source.id.clone(), pair: p.clone(), nvidia, amd: amd_side })
    });
    let mut out = Vec::new();
    for r in results {
        match r {
            Ok(c) => {
                for (name, s) in [("nvidia", &c.nvidia), ("amd", &c.amd)] {
                    if let Some(s) = s {
                        report.bump(&format!("{name}_{}", if s.ok { "ok" } else { "failed" }));
                    }
                }
                out.push(c);
            }
            Err(e) => infra(report, &e),
        }
    }
    report.inputs = pairs.len();
    report.outputs = out.len();
    write_jsonl(&out, &dir.join(RESULTS))?;
    Ok(())
}

fn read_artifact(ws: &Path, s: &SideBuild, k: ArtifactKind) -> Result<Option<String>, PipelineError> {
    match s.artifacts.get(&k) {
        Some(p) => Ok(Some(fs::read_to_string(ws.join(p))?)),
        None => Ok(None),
    }
}

fn extract_side(cfg: &PipelineConfig, splitter: &Splitter, r: &CompileResult, vendor: Vendor, report: &mut StageReport) -> Result<Option<VendorSide>, PipelineError> {
    let Some(s) = (match vendor {
        Vendor::Nvidia => &r.nvidia,
        Vendor::Amd => &r.amd,
    }) else {
        return Ok(None);
    };
    if !s.ok {
        return Ok(Some(VendorSide { ok: false, host: None, device: None }));
    }
    let ws = cfg.workspace_dir();
    let opencl = r.pair.source.lang == Lang::Opencl;
    let sass = |text: String| {
        let text = if cfg.extract.normalize_sass { normalize_sass(&text) } else { text };
        AssemblyArtifact::new(Vendor::Nvidia, Tier::Device, Isa::Sass, text)
    };
    let (host, device) = match (vendor, opencl) {
        (Vendor::Nvidia, false) => match read_artifact(&ws, s, ArtifactKind::MixedDump)? {
            Some(dump) => match splitter.split(&dump) {
                Ok(split) => (Some(split.host), Some(sass(split.device.text)?)),
                Err(AsmError::NoDeviceSection) => {
                    report.bump("nvidia_no_device_section");
                    (None, None)
                }
                Err(e) => return Err(e.into()),
            },
            None => (None, None),
        },
        (Vendor::Nvidia, true) => (None, read_artifact(&ws, s, ArtifactKind::DeviceAsm)?.map(sass).transpose()?),
        (Vendor::Amd, _) => {
            let host = if opencl {
                None
            } else {
                read_artifact(&ws, s, ArtifactKind::HostAsm)?.map(|t| AssemblyArtifact::new(Vendor::Amd, Tier::Host, Isa::X86, t)).transpose()?
            };
            let device = read_artifact(&ws, s, ArtifactKind::DeviceAsm)?
                .map(|t| AssemblyArtifact::new(Vendor::Amd, Tier::Device, Isa::Rdna3, passthrough_rdna3(&t)))
                .transpose()?;
            (host, device)
        }
    };
    Ok(Some(VendorSide { ok: true, host, device }))
}

fn extract(cfg: &PipelineConfig, dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let results: Vec<CompileResult> = read_jsonl(&upstream_file(cfg, Stage::Compile, RESULTS))?;
    let splitter = Splitter::new(&cfg.extract.markers)?;
    let arch = ArchTags { nvidia_arch: cfg.toolchain.nvidia_arch.clone(), amd_arch: cfg.toolchain.amd_arch.clone() };
    let mut bundles = Vec::new();
    for r in &results {
        let opencl = r.pair.source.lang == Lang::Opencl;
        let nvidia = extract_side(cfg, &splitter, r, Vendor::Nvidia, report)?;
        let amd = extract_side(cfg, &splitter, r, Vendor::Amd, report)?;
        bundles.push(ArtifactBundle {
            id: r.id.clone(),
            origin: if opencl { Origin::Opencl } else { r.pair.source.origin },
            cuda_src: (!opencl).then(|| r.pair.source.clone()),
            hip_src: r.pair.hip.clone(),
            kernel_src: opencl.then(|| r.pair.source.clone()),
            translate_ok: r.pair.translate != TranslateStatus::Failed,
            nvidia,
            amd,
            arch: arch.clone(),
        });
    }
    report.inputs = results.len();
    report.outputs = bundles.len();
    write_jsonl(&bundles, &dir.join(BUNDLES))?;
    Ok(())
}

fn align(cfg: &PipelineConfig, dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let bundles: Vec<ArtifactBundle> = read_jsonl(&upstream_file(cfg, Stage::Extract, BUNDLES))?;
    let outcomes = parallel_map(&bundles, cfg.parallelism, |b| align_record(b, KeywordTable::builtin()));
    let mut records = Vec::new();
    for (b, o) in bundles.iter().zip(outcomes) {
        match o {
            AlignOutcome::Record(r) => records.push(*r),
            AlignOutcome::Dropped(reason) => {
                tracing::info!(stage = %Stage::Align, sample = %b.id, outcome = "dropped", reason = reason.as_str());
                report.bump(&format!("dropped_{}", reason.as_str()));
            }
        }
    }
    report.inputs = bundles.len();
    report.outputs = emit_jsonl(&records, &dir.join(CORPUS))?;
    Ok(())
}

fn analyze(cfg: &PipelineConfig, dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let records: Vec<CorpusRecord> = read_jsonl(&upstream_file(cfg, Stage::Align, CORPUS))?;
    let stats = corpus_stats(&records, CategoryTable::builtin());
    stats.write_csvs(dir)?;
    report.inputs = records.len();
    report.outputs = stats.loc.len();
    Ok(())
}

fn bench(cfg: &PipelineConfig, dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let records: Vec<CorpusRecord> = read_jsonl(&upstream_file(cfg, Stage::Align, CORPUS))?;
    let builds: HashMap<String, CompileResult> =
        read_jsonl::<CompileResult>(&upstream_file(cfg, Stage::Compile, RESULTS))?.into_iter().map(|c| (c.id.clone(), c)).collect();
    let nv = cfg.toolchain(ToolchainName::Nvidia)?;
    let amd = cfg.toolchain(ToolchainName::Amd)?;
    let ws = cfg.workspace_dir();
    let timeout = Duration::from_secs(cfg.bench.run_timeout_secs);
    let args = &cfg.bench.run_args;
    let exe = |s: &Option<SideBuild>| s.as_ref().and_then(|s| s.artifacts.get(&ArtifactKind::Executable)).map(|p| ws.join(p));
    let run = |tc: &Toolchain, p: &Path| run_executable(tc, p, args, timeout, 1).map(|t| t.into_iter().next());
    // reference behaviour: both vendors' builds run cleanly and agree
    let runs = parallel_map(&records, cfg.parallelism, |r| -> Result<Option<Vec<u8>>, BuildError> {
        let Some(b) = builds.get(&r.id) else { return Ok(None) };
        let (Some(nv_exe), Some(amd_exe)) = (exe(&b.nvidia), exe(&b.amd)) else { return Ok(None) };
        let (Some(a), Some(b)) = (run(&nv, &nv_exe)?, run(&amd, &amd_exe)?) else { return Ok(None) };
        let clean = |t: &crate::buildfarm::ExecutionTrace| t.exit_code == 0 && !t.timed_out;
        Ok((clean(&a) && clean(&b) && outputs_match(&a.stdout, &b.stdout)).then_some(a.stdout))
    });
    let mut stdout_of = HashMap::new();
    let mut candidates = Vec::new();
    for (r, out) in records.iter().zip(runs) {
        match out {
            Ok(Some(stdout)) => {
                stdout_of.insert(r.id.clone(), stdout);
                candidates.push(r.clone());
            }
            Ok(None) => report.bump("not_differentially_runnable"),
            Err(e) => infra(report, &e),
        }
    }
    let given_train = match &cfg.bench.train {
        Some(p) => Some(read_jsonl::<CorpusRecord>(&cfg.resolve(p))?),
        None => None,
    };
    let index = given_train.as_deref().map(TrainIndex::from_records).unwrap_or_default();
    let curate = CurateConfig { target_per_domain: cfg.bench.target_per_domain, total_cap: cfg.bench.total_cap, seed: cfg.seed };
    let sel = curate_bench(&candidates, &index, &curate, |r| r.domain.name.as_str().to_string());
    let bench: Vec<BenchRecord> = sel
        .bench
        .iter()
        .map(|r| BenchRecord { record: r.clone(), expected_stdout: stdout_of[&r.id].clone(), run_args: args.clone() })
        .collect();
    write_jsonl(&bench, &dir.join(BENCH))?;
    let train = match given_train {
        Some(t) => t,
        None => {
            let ids: HashSet<&str> = sel.bench.iter().map(|r| r.id.as_str()).collect();
            let hashes: HashSet<String> = sel.bench.iter().map(record_hash).collect();
            records.iter().filter(|r| !ids.contains(r.id.as_str()) && !hashes.contains(&record_hash(r))).cloned().collect()
        }
    };
    write_jsonl(&train, &dir.join(TRAIN))?;
    fs::write(dir.join("selection.json"), serde_json::to_string_pretty(&serde_json::json!({
        "per_domain": sel.per_domain,
        "insufficient": sel.insufficient,
        "excluded_overlap": sel.excluded_overlap,
        "excluded_duplicate": sel.excluded_duplicate,
        "total": sel.total,
    }))? + "\n")?;
    report.inputs = records.len();
    report.outputs = bench.len();
    report.counts.insert("train".into(), train.len());
    report.counts.insert("excluded_overlap".into(), sel.excluded_overlap);
    report.counts.insert("insufficient_domains".into(), sel.insufficient.len());
    Ok(())
}

fn eval(cfg: &PipelineConfig, dir: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let Some(cands) = &cfg.eval.candidates else {
        report.fatal("eval.candidates is not set");
        return Ok(());
    };
    let bench: Vec<BenchRecord> = read_jsonl(&upstream_file(cfg, Stage::Bench, BENCH))?;
    let tc = cfg.toolchain(ToolchainName::Amd)?;
    let e = &cfg.eval;
    let opts = JudgeOptions {
        work_dir: dir.join("work"),
        repetitions: e.repetitions,
        timeout: Duration::from_secs(e.timeout_secs),
        profile: e.profile,
        normalized_mode: e.normalized_mode,
    };
    report.inputs = bench.len();
    match run_eval(&bench, &cfg.resolve(cands), e.level, &tc, &opts, cfg.parallelism, dir) {
        Ok(r) => {
            report.outputs = r.verdicts.len();
            report.counts.insert("infra_errors".into(), r.infra.len());
            report.counts.insert("compiled".into(), r.metrics.compile_rate.hits);
            report.counts.insert("output_match".into(), r.metrics.test_acc.hits);
        }
        Err(crate::evalharness::EvalError::EmptyRun) => report.fatal("no task could be judged"),
        Err(err) => return Err(err.into()),
    }
    // scratch builds are not part of the stage output
    let _ = fs::remove_dir_all(dir.join("work"));
    Ok(())
}
