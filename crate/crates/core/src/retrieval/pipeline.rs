use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Question};
use crate::error::{Error, Result, ResultExt};
use crate::par;
use crate::providers::{EmbeddingProvider, RerankProvider};
use crate::retrieval::{
    dense_search, fuse, normalize_scores, rerank, Bm25Index, Bm25Params, FusionWeights,
    RerankDepth, ScoredPassage, VectorStore,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub bm25: Bm25Params,
    pub weights: FusionWeights,
    pub rerank_depth: RerankDepth,
    /// Candidates each first-stage retriever contributes to fusion.
    pub pool_size: usize,
    /// Passages returned per question.
    pub final_k: usize,
    pub embed_batch_size: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            bm25: Bm25Params::default(),
            weights: FusionWeights::default(),
            rerank_depth: RerankDepth::default(),
            pool_size: 100,
            final_k: 10,
            embed_batch_size: 32,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        self.bm25.validate()?;
        self.weights.validate()?;
        RerankDepth::new(self.rerank_depth.0)?;
        if self.pool_size < 1 || self.final_k < 1 || self.embed_batch_size < 1 {
            return Err(Error::config(
                "pool_size, final_k and embed_batch_size must be positive",
            ));
        }
        Ok(())
    }
}

/// Normalized first-stage lists for one query: BM25 and the two dense retrievers.
#[derive(Clone, Debug)]
pub struct FirstStage {
    pub lists: [Vec<ScoredPassage>; 3],
}

struct DenseRetriever {
    provider: Arc<dyn EmbeddingProvider>,
    store: VectorStore,
}

/// BM25 + two dense retrievers → min-max → weighted fusion → rerank → top-k.
pub struct Retriever {
    corpus: Arc<Corpus>,
    bm25: Bm25Index,
    dense: [DenseRetriever; 2],
    reranker: Arc<dyn RerankProvider>,
    config: RetrievalConfig,
}

fn sidecar_name(provider: &dyn EmbeddingProvider) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect()
    };
    format!("{}__{}.vec", clean(provider.provider_id()), clean(provider.model_name()))
}

impl Retriever {
    /// Builds the BM25 index and embeds the corpus with both dense providers.
    /// With `cache_dir`, passage embeddings persist there as binary sidecars.
    pub fn new(
        corpus: Arc<Corpus>,
        config: RetrievalConfig,
        dense_y: Arc<dyn EmbeddingProvider>,
        dense_z: Arc<dyn EmbeddingProvider>,
        reranker: Arc<dyn RerankProvider>,
        cache_dir: Option<&Path>,
    ) -> Result<Self> {
        config.validate()?;
        let bm25 = Bm25Index::build(&corpus, config.bm25)?;
        let store = |p: &Arc<dyn EmbeddingProvider>| -> Result<VectorStore> {
            match cache_dir {
                Some(dir) => VectorStore::load_or_build(
                    p.as_ref(),
                    &corpus,
                    config.embed_batch_size,
                    &dir.join(sidecar_name(p.as_ref())),
                ),
                None => VectorStore::build(p.as_ref(), &corpus, config.embed_batch_size),
            }
        };
        let dense = [
            DenseRetriever {
                store: store(&dense_y)?,
                provider: dense_y,
            },
            DenseRetriever {
                store: store(&dense_z)?,
                provider: dense_z,
            },
        ];
        Ok(Self {
            corpus,
            bm25,
            dense,
            reranker,
            config,
        })
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn bm25(&self) -> &Bm25Index {
        &self.bm25
    }

    pub fn first_stage(&self, query: &str) -> Result<FirstStage> {
        let k = self.config.pool_size;
        let bm25 = normalize_scores(&self.bm25.search(query, k)?)?;
        let y = normalize_scores(&dense_search(
            self.dense[0].provider.as_ref(),
            &self.dense[0].store,
            query,
            k,
        )?)?;
        let z = normalize_scores(&dense_search(
            self.dense[1].provider.as_ref(),
            &self.dense[1].store,
            query,
            k,
        )?)?;
        Ok(FirstStage {
            lists: [bm25, y, z],
        })
    }

    pub fn fuse_stage(&self, stage: &FirstStage, weights: FusionWeights) -> Result<Vec<ScoredPassage>> {
        let [x, y, z] = &stage.lists;
        fuse([x, y, z], weights, self.config.pool_size)
    }

    pub fn rerank_stage(
        &self,
        query: &str,
        fused: &[ScoredPassage],
        depth: RerankDepth,
        k: usize,
    ) -> Result<Vec<ScoredPassage>> {
        let text = |p: &ScoredPassage| -> Result<String> {
            self.corpus
                .get(&p.passage)
                .map(|p| p.text.clone())
                .ok_or_else(|| Error::DanglingRefs(vec![p.key.clone()]))
        };
        rerank(self.reranker.as_ref(), query, fused, &text, depth, k)
    }

    /// Full pipeline for one question. The returned list carries per-query
    /// min-max normalized scores for the downstream relevance filter.
    pub fn retrieve(&self, question: &Question) -> Result<Vec<ScoredPassage>> {
        self.retrieve_with(question, self.config.weights, self.config.rerank_depth)
    }

    pub fn retrieve_with(
        &self,
        question: &Question,
        weights: FusionWeights,
        depth: RerankDepth,
    ) -> Result<Vec<ScoredPassage>> {
        let stage = self
            .first_stage(&question.text)
            .context_with(|| format!("question {}", question.question_id))?;
        let fused = self.fuse_stage(&stage, weights)?;
        let ranked = self
            .rerank_stage(&question.text, &fused, depth, self.config.final_k)
            .context_with(|| format!("question {}", question.question_id))?;
        finalize(ranked)
    }

    /// Retrieves every question; questions run in parallel, output in input order.
    pub fn retrieve_all(&self, questions: &[Question]) -> Result<Vec<Vec<ScoredPassage>>> {
        par::try_map(questions, |q| self.retrieve(q))
    }
}

/// Re-normalizes a final ranked list per query; empty lists pass through.
pub fn finalize(list: Vec<ScoredPassage>) -> Result<Vec<ScoredPassage>> {
    if list.is_empty() {
        return Ok(list);
    }
    normalize_scores(&list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;
    use crate::providers::{HashEmbedder, IdentityRerank};
    use crate::retrieval::sort_and_rank;

    fn corpus() -> Arc<Corpus> {
        let texts = [
            "Authorised firms must maintain adequate records of all transactions.",
            "A fund manager shall notify the regulator of any material change.",
            "Client money must be held in a segregated account.",
            "The annual report must be filed within four months.",
            "Firms may apply for a waiver of certain rules.",
            "An auditor shall be appointed by every authorised firm.",
            "Records must be kept for at least six years.",
            "The regulator may impose a financial penalty.",
            "A branch must appoint a senior executive officer.",
            "Marketing material must be clear, fair and not misleading.",
            "Custody assets shall be reconciled monthly.",
            "Complaints must be acknowledged within five business days.",
        ];
        Arc::new(
            Corpus::new(
                texts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| Passage::new("doc", format!("{i:02}"), *t))
                    .collect(),
            )
            .unwrap(),
        )
    }

    fn retriever(weights: FusionWeights) -> Retriever {
        let cfg = RetrievalConfig {
            weights,
            ..RetrievalConfig::default()
        };
        Retriever::new(
            corpus(),
            cfg,
            Arc::new(HashEmbedder::new(1, 64)),
            Arc::new(HashEmbedder::new(2, 64)),
            Arc::new(IdentityRerank),
            None,
        )
        .unwrap()
    }

    #[test]
    fn bm25_only_weights_reduce_to_bm25_ordering() {
        let r = retriever(FusionWeights::new(1.0, 0.0).unwrap());
        let q = Question::new("q1", "how long must records be kept");
        let got: Vec<String> = r.retrieve(&q).unwrap().into_iter().map(|p| p.key).collect();
        let mut bm25 = r.bm25().search(&q.text, 10).unwrap();
        sort_and_rank(&mut bm25);
        let want: Vec<String> = bm25.into_iter().map(|p| p.key).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn output_has_final_k_normalized_entries() {
        let r = retriever(FusionWeights::default());
        let out = r.retrieve(&Question::new("q", "client money segregated account")).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out[0].normalized_score, Some(1.0));
        assert!(out
            .windows(2)
            .all(|w| w[0].normalized_score >= w[1].normalized_score));
        assert_eq!(out[0].key, "doc#02");
    }

    #[test]
    fn retrieval_is_deterministic() {
        let qs = vec![
            Question::new("a", "annual report filing deadline"),
            Question::new("b", "auditor appointment"),
        ];
        let r = retriever(FusionWeights::default());
        assert_eq!(r.retrieve_all(&qs).unwrap(), r.retrieve_all(&qs).unwrap());
    }
}
