// Builds a small bench split by running the mock pipeline over the fixture repositories.
// Each test binary uses a different subset of these helpers.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use forge_core::corpus::{read_jsonl, BenchRecord};
use forge_core::pipeline::{run_stages, PipelineConfig, Stage};

pub fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pipeline")
}

pub fn fixture_config(workspace: &Path, overrides: &[String]) -> PipelineConfig {
    let dir = fixture_dir();
    let text = fs::read_to_string(dir.join("config.toml")).unwrap();
    let ws = workspace.to_string_lossy().into_owned();
    PipelineConfig::from_toml_str(&text, &dir, overrides, &|k| (k == "FORGE_WORKSPACE").then(|| ws.clone())).unwrap()
}

/// Every differentially runnable fixture task, uncapped.
pub fn mock_bench(workspace: &Path) -> Vec<BenchRecord> {
    let cfg = fixture_config(workspace, &["bench.total_cap=100".into(), "bench.target_per_domain=100".into()]);
    let stages = [Stage::Ingest, Stage::Translate, Stage::Compile, Stage::Extract, Stage::Align, Stage::Bench];
    let reports = run_stages(&stages, &cfg).unwrap();
    assert!(reports.iter().all(|r| r.ok()), "{reports:#?}");
    read_jsonl(&workspace.join("bench/bench.jsonl")).unwrap()
}
