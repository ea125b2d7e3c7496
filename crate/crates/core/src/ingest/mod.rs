//! Acquisition and filtering of raw GPU sources from repository snapshots.

mod dedup;
mod filter;
mod repos;

pub use dedup::dedup_corpus;
pub use filter::{filter_source, has_kernel_definition, FilterConfig, FilterReason, FilterVerdict};
pub use repos::{
    ingest_repositories, read_manifest, read_metadata_csv, scan_repository, select_repositories,
    write_manifest, IngestReport, ManifestEntry, RepoMeta,
};

use serde::{Deserialize, Serialize};

use crate::text::{line_count, sha256_hex};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid metadata row {row}: {message}")]
    Metadata { row: usize, message: String },
    #[error("invalid filter pattern `{pattern}`: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Stack,
    Synthetic,
    Opencl,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Stack => "stack",
            Origin::Synthetic => "synthetic",
            Origin::Opencl => "opencl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lang {
    Cuda,
    Hip,
    Opencl,
}

impl Lang {
    pub fn from_extension(ext: &str) -> Option<Lang> {
        match ext {
            "cu" | "cuh" => Some(Lang::Cuda),
            "hip" => Some(Lang::Hip),
            "cl" => Some(Lang::Opencl),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Lang::Cuda => "cu",
            Lang::Hip => "hip",
            Lang::Opencl => "cl",
        }
    }
}

/// One source file with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub id: String,
    pub origin: Origin,
    pub lang: Lang,
    pub text: String,
    pub line_count: usize,
    pub relative_path: String,
    pub repo_id: Option<String>,
    pub license: Option<String>,
}

impl SourceUnit {
    pub fn new(
        origin: Origin,
        lang: Lang,
        text: impl Into<String>,
        relative_path: impl Into<String>,
        repo_id: Option<String>,
        license: Option<String>,
    ) -> SourceUnit {
        let text = text.into();
        let relative_path = relative_path.into();
        let id = unit_id(origin, repo_id.as_deref(), &relative_path, &text);
        SourceUnit {
            id,
            origin,
            lang,
            line_count: line_count(&text),
            text,
            relative_path,
            repo_id,
            license,
        }
    }

    /// Same provenance, new language and text; the id is recomputed.
    pub fn derive(&self, lang: Lang, text: impl Into<String>, relative_path: impl Into<String>) -> SourceUnit {
        SourceUnit::new(
            self.origin,
            lang,
            text,
            relative_path,
            self.repo_id.clone(),
            self.license.clone(),
        )
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(&self.text)
    }
}

/// Stable id over (origin, repo, path, content hash).
pub fn unit_id(origin: Origin, repo_id: Option<&str>, relative_path: &str, text: &str) -> String {
    let key = format!(
        "{}\0{}\0{}\0{}",
        origin.as_str(),
        repo_id.unwrap_or(""),
        relative_path,
        sha256_hex(text)
    );
    sha256_hex(key)[..24].to_string()
}
