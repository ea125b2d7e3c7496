//! Aligned dataset records, JSONL emission, length strata and bench curation.

mod bench;
mod record;
mod strata;

pub use bench::{curate_bench, BenchRecord, BenchSelection, CurateConfig, InsufficientCandidates, TrainIndex};
pub use record::{
    align_record, emit_jsonl, read_jsonl, record_hash, write_jsonl, AlignOutcome, ArchTags, ArtifactBundle,
    CorpusRecord, DropReason, VendorSide,
};
pub use strata::{stratify, LengthStratum, Strata};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {source}")]
    Jsonl {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("asm: {0}")]
    Asm(#[from] crate::asmproc::AsmError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
