//! Core library for a generation-based sequential recommendation pipeline:
//! dataset preprocessing, prompt rendering, BM25 retrieval with
//! quasi-round-robin sample fusion, tie-aware evaluation, and reference
//! training objectives.
//!
//! The crate is organized along the pipeline's file boundaries:
//!
//! - [`corpus`]: ingestion, dedup, k-core filtering, splits, statistics
//! - [`prompting`]: byte-pinned prompt template rendering
//! - [`bm25`]: tokenizer and Okapi BM25 inverted index
//! - [`retrieval`]: quasi-round-robin ranking, hierarchical matching, LIR
//! - [`metrics`]: optimistic/pessimistic NDCG, Recall, MRR
//! - [`objectives`]: NIG and InfoNCE losses, diagnostics, paired t-test
//! - [`llm_client`]: file or HTTP generation sources
//! - [`io`]: JSONL and binary file formats
//!
//! Batch work parallelizes with rayon under the default `parallel` feature
//! and degrades to sequential loops without it; outputs are byte-identical
//! either way.

pub mod bm25;
pub mod corpus;
pub mod error;
pub mod io;
pub mod llm_client;
pub mod metrics;
pub mod objectives;
pub mod par;
pub mod prompting;
pub mod retrieval;

pub use error::{Error, FormatError, Result};
