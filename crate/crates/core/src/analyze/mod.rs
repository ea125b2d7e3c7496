//! Corpus analytics: opcode categories, domain labels, chrF and the
//! aggregate tables behind the dataset plots.

mod categories;
mod chrf;
mod domains;
mod stats;

pub use categories::{categorize_opcode, CategoryTable, OpcodeCategory, DEFAULT_CATEGORY_TABLE};
pub use chrf::{chrf, chrf2, ChrfScore, DEFAULT_BETA, DEFAULT_N_MAX};
pub use domains::{classify_domain, Domain, DomainLabel, KeywordTable, DEFAULT_KEYWORD_TABLE};
pub use stats::{corpus_stats, AsmField, CorpusStats, DomainRow, LocRow, OpcodeRow, Summary, TokenRow};

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
