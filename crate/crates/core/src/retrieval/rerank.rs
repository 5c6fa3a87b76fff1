use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::providers::{self, RerankProvider};
use crate::retrieval::{assign_ranks, check_k, rank_cmp, ScoredPassage};

/// Number of fused candidates passed to the reranker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RerankDepth(pub usize);

impl Default for RerankDepth {
    fn default() -> Self {
        RerankDepth(50)
    }
}

impl RerankDepth {
    pub fn new(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::config("rerank depth must be at least 1"));
        }
        Ok(Self(n))
    }
}

/// Re-scores the first `depth` candidates with `provider` and re-sorts
/// them; the remaining candidates follow in their fused order. Scores of
/// that tail are clamped so the list stays non-increasing. The result is
/// truncated to `k`.
pub fn rerank(
    provider: &dyn RerankProvider,
    query: &str,
    candidates: &[ScoredPassage],
    passage_text: &dyn Fn(&ScoredPassage) -> Result<String>,
    depth: RerankDepth,
    k: usize,
) -> Result<Vec<ScoredPassage>> {
    check_k(k)?;
    if depth.0 < 1 {
        return Err(Error::config("rerank depth must be at least 1"));
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let n = depth.0.min(candidates.len());
    let (head, tail) = candidates.split_at(n);
    let texts = head.iter().map(passage_text).collect::<Result<Vec<_>>>()?;
    let prior: Vec<f64> = head.iter().map(|p| p.raw_score).collect();
    let scores = providers::rerank_scores(provider, query, &texts, &prior)
        .context_with(|| format!("reranking for query {query:?}"))?;
    let mut block: Vec<ScoredPassage> = head
        .iter()
        .zip(scores)
        .map(|(p, s)| {
            let mut q = p.clone();
            q.raw_score = s;
            q.normalized_score = None;
            q
        })
        .collect();
    block.sort_by(|a, b| rank_cmp(a.raw_score, &a.key, b.raw_score, &b.key));
    let mut floor = block.last().map_or(f64::INFINITY, |p| p.raw_score);
    for p in tail.iter().take(k.saturating_sub(block.len())) {
        let mut q = p.clone();
        q.raw_score = q.raw_score.min(floor);
        q.normalized_score = None;
        floor = q.raw_score;
        block.push(q);
    }
    block.truncate(k);
    assign_ranks(&mut block);
    Ok(block)
}
