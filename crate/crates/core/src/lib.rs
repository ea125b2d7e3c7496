//! Corpus factory and evaluation harness for cross-vendor GPU code translation.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`ingest`] scans repository snapshots, filters and deduplicates CUDA sources.
//! - [`synthgen`] expands prompt templates against a chat-completion endpoint.
//! - [`buildfarm`] drives hipify and the vendor compilers through declarative
//!   [`buildfarm::ToolchainSpec`]s, with an in-process mock backend.
//! - [`asmproc`] separates, normalises and tokenises host/device assembly.
//! - [`corpus`] aligns artifacts into dataset records, stratifies and curates the bench split.
//! - [`analyze`] holds chrF, opcode categories, domain classification and corpus statistics.
//! - [`evalharness`] judges candidate translations by compile + execute + exact output match.
//! - [`pipeline`] wires the stages into a resumable, content-stamped DAG.

pub mod analyze;
pub mod asmproc;
pub mod buildfarm;
pub mod corpus;
pub mod evalharness;
pub mod ingest;
pub mod pipeline;
pub mod pool;
pub mod synthgen;
pub mod text;
