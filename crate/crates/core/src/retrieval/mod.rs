//! First-stage retrieval (BM25 and dense), min-max normalization, three-way
//! weighted score fusion and second-stage reranking.
//!
//! Every ranked list in this module is ordered by descending score, ties
//! broken by ascending passage key (`document_id#passage_id`).

pub mod bm25;
pub mod dense;
pub mod fusion;
pub mod pipeline;
pub mod rerank;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::PassageRef;
use crate::error::{Error, Result};

pub use bm25::{Bm25Index, Bm25Params};
pub use dense::{dense_search, VectorStore};
pub use fusion::{fuse, normalize_scores, FusionWeights};
pub use pipeline::{FirstStage, RetrievalConfig, Retriever};
pub use rerank::{rerank, RerankDepth};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage: PassageRef,
    pub key: String,
    pub raw_score: f64,
    /// Set by [`normalize_scores`]; `None` before normalization.
    pub normalized_score: Option<f64>,
    pub rank: usize,
}

impl ScoredPassage {
    pub fn new(passage: PassageRef, raw_score: f64) -> Self {
        let key = passage.key();
        Self {
            passage,
            key,
            raw_score,
            normalized_score: None,
            rank: 0,
        }
    }

    /// The normalized score, or an error naming the passage if unset.
    pub fn normalized(&self) -> Result<f64> {
        self.normalized_score
            .ok_or_else(|| Error::invalid(format!("passage {} is not normalized", self.key)))
    }
}

/// Descending score, then ascending passage key.
pub fn rank_cmp(a_score: f64, a_key: &str, b_score: f64, b_key: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_key.cmp(b_key))
}

/// Sorts by raw score with the deterministic tie-break and assigns ranks 1..n.
pub fn sort_and_rank(list: &mut [ScoredPassage]) {
    list.sort_by(|a, b| rank_cmp(a.raw_score, &a.key, b.raw_score, &b.key));
    assign_ranks(list);
}

pub fn assign_ranks(list: &mut [ScoredPassage]) {
    for (i, p) in list.iter_mut().enumerate() {
        p.rank = i + 1;
    }
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(())
}
