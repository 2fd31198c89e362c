//! Demonstration retrieval: Okapi BM25 over an inverted index, rank tiers,
//! and cosine retrieval over precomputed sentence embeddings.

mod bm25;
mod cache;
mod dense;
mod tiers;

use std::cmp::Ordering;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{bm25_score, build_index, retrieve, Bm25Params, InvertedIndex, Posting};
pub use cache::{load_index, save_index, INDEX_FORMAT_VERSION};
pub use dense::{dense_retrieve, load_embeddings, EmbeddingTable};
pub use tiers::{partition_tiers, TIER_COUNT, TIER_POOL, TIER_SIZE};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("unknown document id {0}")]
    UnknownDoc(usize),
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },
    #[error("vector dimension {got} does not match table dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("embedding for id {0} has zero norm")]
    ZeroVector(usize),
    #[error("duplicate embedding id {0}")]
    DuplicateId(usize),
    #[error("embedding file line {line}: {message}")]
    EmbeddingFormat { line: usize, message: String },
    #[error("index cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub doc_id: usize,
    pub score: f64,
    pub rank: usize,
    pub tier: Option<u8>,
}

/// Descending score, then ascending doc id.
pub(crate) fn hit_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

pub(crate) fn ranked(mut scored: Vec<(usize, f64)>, k: usize) -> Vec<RetrievalHit> {
    scored.sort_by(hit_order);
    scored.truncate(k);
    scored
        .into_iter()
        .enumerate()
        .map(|(rank, (doc_id, score))| RetrievalHit {
            doc_id,
            score,
            rank,
            tier: None,
        })
        .collect()
}
