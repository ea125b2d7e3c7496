//! Synthetic CUDA generation: template expansion, a chat-completion
//! client, fenced-code extraction, resumable batches and output dedup.

mod batch;
mod dedup;
mod endpoint;
mod extract;
mod templates;

pub use batch::{collect_outputs, generate_batch, plan_jobs, BatchConfig, BatchSummary, GenerationJob, JobStatus};
pub use dedup::{dedup_synthetic, shingle_signature, OpcodeProfile, Signature, DEFAULT_SIMILARITY};
pub use endpoint::{ChatEndpoint, ChatReply, EndpointError, HttpEndpoint};
pub use extract::{extract_code, extract_fenced};
pub use templates::{
    expand_template, parse_domains, parse_templates, placeholders_of, sample_bindings, Bindings, PlaceholderDomain,
    PromptTemplate, TemplateCategory, DEFAULT_DOMAINS, DEFAULT_TEMPLATES,
};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("no value set for placeholder `{0}`")]
    MissingDomain(String),
    #[error("no binding for placeholder `{0}`")]
    MissingBinding(String),
    #[error("response has no fenced code block")]
    NoCodeBlock,
    #[error("extracted code defines no __global__ kernel")]
    NoKernel,
    #[error("{file} line {line}: {message}")]
    Parse { file: &'static str, line: usize, message: String },
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
