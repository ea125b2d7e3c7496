use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::filter::FilterRules;
use super::{dedup_corpus, filter_source, FilterReason, FilterVerdict, IngestError, Lang, Origin, SourceUnit};
use crate::pool::parallel_map;

/// One row of the repository metadata table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoMeta {
    pub repo_id: String,
    pub cuda_file_count: u64,
    #[serde(default)]
    pub license: Option<String>,
}

/// Reads a CSV with header `repo_id,cuda_file_count` and an optional `license` column.
pub fn read_metadata_csv(path: &Path) -> Result<Vec<RepoMeta>, IngestError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<RepoMeta>().enumerate() {
        let mut row = row.map_err(|e| IngestError::Metadata { row: i + 1, message: e.to_string() })?;
        if row.license.as_deref() == Some("") {
            row.license = None;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// The `limit` repositories with the most CUDA files, descending by count,
/// ties broken by ascending repo id.
pub fn select_repositories(table: &[RepoMeta], limit: usize) -> Result<Vec<String>, IngestError> {
    if table.is_empty() {
        return Err(IngestError::EmptyInput("repository metadata table"));
    }
    let mut rows: Vec<&RepoMeta> = table.iter().collect();
    rows.sort_by(|a, b| b.cuda_file_count.cmp(&a.cuda_file_count).then_with(|| a.repo_id.cmp(&b.repo_id)));
    Ok(rows.into_iter().take(limit).map(|r| r.repo_id.clone()).collect())
}

/// Loads every CUDA (`.cu`, `.cuh`) and OpenCL (`.cl`) file below `root`,
/// keeping paths relative to the repository root. Output is sorted by path.
pub fn scan_repository(root: &Path, repo_id: &str, license: Option<&str>) -> Result<Vec<SourceUnit>, IngestError> {
    let mut units = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| IngestError::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let Some(lang) = path.extension().and_then(|e| e.to_str()).and_then(Lang::from_extension) else {
            continue;
        };
        if lang == Lang::Hip {
            continue;
        }
        let bytes = fs::read(path)?;
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let rel = path
            .strip_prefix(root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        let origin = if lang == Lang::Opencl { Origin::Opencl } else { Origin::Stack };
        units.push(SourceUnit::new(
            origin,
            lang,
            text,
            rel,
            Some(repo_id.to_string()),
            license.map(str::to_string),
        ));
    }
    Ok(units)
}

/// One manifest line: the unit plus its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub unit: SourceUnit,
    pub verdict: FilterVerdict,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub selected_repos: Vec<String>,
    pub missing_repos: Vec<String>,
    pub scanned: usize,
    pub kept: usize,
    pub rejected: BTreeMap<String, usize>,
}

/// Selects repositories, scans their trees, filters and deduplicates.
///
/// Every scanned file appears in the returned manifest; duplicates of an
/// earlier kept file carry reason `duplicate`.
pub fn ingest_repositories(
    repos_dir: &Path,
    metadata: &[RepoMeta],
    limit: usize,
    rules: &FilterRules,
    parallelism: usize,
) -> Result<(Vec<ManifestEntry>, IngestReport), IngestError> {
    let selected = select_repositories(metadata, limit)?;
    let mut report = IngestReport { selected_repos: selected.clone(), ..IngestReport::default() };
    let mut units = Vec::new();
    for repo in &selected {
        let dir = repos_dir.join(repo);
        if !dir.is_dir() {
            tracing::warn!(repo = %repo, "selected repository has no snapshot directory");
            report.missing_repos.push(repo.clone());
            continue;
        }
        let license = metadata.iter().find(|m| &m.repo_id == repo).and_then(|m| m.license.as_deref());
        units.extend(scan_repository(&dir, repo, license)?);
    }
    report.scanned = units.len();

    let verdicts = parallel_map(&units, parallelism, |u| filter_source(u, rules));
    let kept: Vec<SourceUnit> = units
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| v.keep)
        .map(|(u, _)| u.clone())
        .collect();
    let unique: std::collections::HashSet<String> = dedup_corpus(kept).into_iter().map(|u| u.id).collect();

    let mut entries = Vec::with_capacity(units.len());
    let mut emitted = std::collections::HashSet::new();
    for (unit, verdict) in units.into_iter().zip(verdicts) {
        let verdict = if verdict.keep && !(unique.contains(&unit.id) && emitted.insert(unit.id.clone())) {
            FilterVerdict::of(FilterReason::Duplicate)
        } else {
            verdict
        };
        if verdict.keep {
            report.kept += 1;
        } else {
            let key = serde_json::to_value(verdict.reason)?.as_str().unwrap_or("unknown").to_string();
            *report.rejected.entry(key).or_default() += 1;
        }
        entries.push(ManifestEntry { unit, verdict });
    }
    Ok((entries, report))
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IngestError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line)?);
    }
    Ok(entries)
}
