mod support {
    pub mod mock_bench;
}

use std::fs;

use forge_core::buildfarm::{Toolchain, ToolchainName, ToolchainSpec};
use forge_core::corpus::BenchRecord;
use forge_core::evalharness::{judge_assembly, judge_source, run_eval, ErrorKind, EvalVerdict, JudgeOptions, Level};
use support::mock_bench::mock_bench;

fn amd() -> Toolchain {
    Toolchain::new(ToolchainSpec::mock(ToolchainName::Amd, "gfx1100"))
}

fn opts(work: &std::path::Path) -> JudgeOptions {
    JudgeOptions { repetitions: 3, profile: false, ..JudgeOptions::new(work) }
}

fn with_store(bench: &[BenchRecord]) -> &BenchRecord {
    bench.iter().find(|b| b.record.rdna3.text.contains("global_store_b32")).expect("a storing kernel")
}

#[test]
fn identity_assembly_passes_with_full_chrf() {
    let ws = tempfile::tempdir().unwrap();
    let bench = mock_bench(ws.path());
    assert_eq!(bench.len(), 8);
    for task in &bench {
        let v = judge_assembly(&task.record.rdna3.text, task, &amd(), &opts(&ws.path().join("judge"))).unwrap();
        assert!(v.compiled && v.executed && v.output_match, "{v:#?}");
        assert!(v.error_categories.is_empty());
        assert!((v.chrf.unwrap().value - 100.0).abs() < 1e-9);
    }
}

#[test]
fn hallucinated_mnemonic_is_invalid_instruction() {
    let ws = tempfile::tempdir().unwrap();
    let bench = mock_bench(ws.path());
    let task = &bench[0];
    let bad = task.record.rdna3.text.replacen("s_endpgm", "sumba_send_msg_b32 v0, v3", 1);
    let v = judge_assembly(&bad, task, &amd(), &opts(&ws.path().join("judge"))).unwrap();
    assert!(!v.compiled && !v.executed && !v.output_match);
    assert_eq!(v.error_categories[0].name, ErrorKind::InvalidInstruction);
    assert!(v.error_categories[0].matched_diagnostic.contains("invalid instruction"));
    assert!(v.chrf.unwrap().value < 100.0);
}

#[test]
fn dropped_store_runs_but_mismatches() {
    let ws = tempfile::tempdir().unwrap();
    let bench = mock_bench(ws.path());
    let task = with_store(&bench);
    let text: String = task.record.rdna3.text.split_inclusive('\n').filter(|l| !l.contains("global_store_b32")).collect();
    let v = judge_assembly(&text, task, &amd(), &opts(&ws.path().join("judge"))).unwrap();
    assert!(v.compiled && v.executed && !v.output_match, "{v:#?}");
}

#[test]
fn source_level_judgements() {
    let ws = tempfile::tempdir().unwrap();
    let bench = mock_bench(ws.path());
    let task = &bench[0];
    let hip = &task.record.hip_src.as_ref().unwrap().text;
    let o = opts(&ws.path().join("judge"));

    let v = judge_source(hip, task, &amd(), &o).unwrap();
    assert!(v.compiled && v.executed && v.output_match, "{v:#?}");
    assert!(v.chrf.is_none());

    let headerless = hip.replace("#include <hip/hip_runtime.h>\n", "");
    let v = judge_source(&headerless, task, &amd(), &o).unwrap();
    assert!(!v.compiled, "{v:#?}");
    assert!(v.error_categories[0].matched_diagnostic.contains("undeclared identifier"));

    // the message moves to stderr, so stdout no longer matches
    let to_stderr = hip.replacen("printf(\"", "fprintf(stderr, \"", 1);
    assert_ne!(&to_stderr, hip);
    let v = judge_source(&to_stderr, task, &amd(), &o).unwrap();
    assert!(v.compiled && v.executed && !v.output_match, "{v:#?}");
}

#[test]
fn profiling_a_faithful_candidate_reports_deltas() {
    let ws = tempfile::tempdir().unwrap();
    let bench = mock_bench(ws.path());
    let task = &bench[0];
    let o = JudgeOptions { repetitions: 2, ..JudgeOptions::new(ws.path().join("judge")) };
    let v = judge_assembly(&task.record.rdna3.text, task, &amd(), &o).unwrap();
    assert!(v.output_match);
    assert!(v.runtime_delta.unwrap().abs() < 0.5);
    assert_eq!(v.within_half_second, Some(true));
}

#[test]
fn run_eval_writes_verdicts_and_tables() {
    let ws = tempfile::tempdir().unwrap();
    let bench = mock_bench(ws.path());
    let cands = ws.path().join("candidates");
    fs::create_dir_all(&cands).unwrap();
    // task 0: identity, fenced like a model reply; task 1: bad mnemonic; the rest have no candidate
    fs::write(cands.join(format!("{}.s", bench[0].record.id)), format!("Here you go:\n```amdasm\n{}```\n", bench[0].record.rdna3.text)).unwrap();
    fs::write(cands.join(format!("{}.s", bench[1].record.id)), bench[1].record.rdna3.text.replacen("s_endpgm", "sumba_send_msg_b32 v0, v3", 1)).unwrap();
    let out = ws.path().join("eval");
    let report = run_eval(&bench, &cands, Level::Assembly, &amd(), &opts(&ws.path().join("judge")), 3, &out).unwrap();
    assert_eq!(report.verdicts.len(), bench.len());
    assert!(report.infra.is_empty());
    let m = &report.metrics;
    assert_eq!((m.test_acc.hits, m.test_acc.total), (1, bench.len()));
    assert_eq!(m.compile_rate.hits, 1);
    let invalid = m.errors.iter().find(|e| e.category == ErrorKind::InvalidInstruction).unwrap();
    assert_eq!(invalid.tasks, 1);
    let other = m.errors.iter().find(|e| e.category == ErrorKind::Other).unwrap();
    assert_eq!(other.tasks, bench.len() - 2);

    let lines = fs::read_to_string(out.join("verdicts.jsonl")).unwrap();
    let parsed: Vec<EvalVerdict> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, report.verdicts);
    for f in ["metrics.json", "infra_errors.jsonl", "errors.csv", "strata.csv", "failure_features.csv", "domains.csv", "runtime_delta.csv", "memory_delta.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    assert!(errors.lines().any(|l| l.starts_with("invalid_instruction,1")), "{errors}");
}

#[test]
fn task_without_host_assembly_is_not_judged() {
    let ws = tempfile::tempdir().unwrap();
    let mut bench = mock_bench(ws.path());
    bench[0].record.x86_amd = None;
    let cands = ws.path().join("candidates");
    fs::create_dir_all(&cands).unwrap();
    for b in &bench {
        fs::write(cands.join(format!("{}.s", b.record.id)), &b.record.rdna3.text).unwrap();
    }
    let report = run_eval(&bench, &cands, Level::Assembly, &amd(), &opts(&ws.path().join("judge")), 2, &ws.path().join("eval")).unwrap();
    assert_eq!(report.infra.len(), 1);
    assert_eq!(report.infra[0].task_id, bench[0].record.id);
    assert_eq!(report.metrics.tasks, bench.len() - 1);
    assert_eq!(report.metrics.infra_errors, 1);
    assert_eq!(report.metrics.test_acc.hits, bench.len() - 1);
}
