//! Deterministic offline providers.
//!
//! NLI mock semantics (whitespace-normalized text, lowercase word tokens):
//! - premise == hypothesis: entail 1.0
//! - otherwise entail = 0.9 × (fraction of hypothesis tokens present in the
//!   premise), neutral = 1 − entail; disjoint token sets give neutral 1.0
//! - the negation mock additionally scores contradict 1.0 when one side is
//!   `"NOT "` followed by the other

use std::collections::HashSet;

use crate::error::Result;
use crate::providers::{
    ChatModel, EmbeddingProvider, NliProvider, NliScores, ObligationClassifier, ObligationLabel,
    RerankProvider, Sampling,
};
use crate::text::{collapse_whitespace, hash64, tokenize};

pub const DEFAULT_DIMENSION: usize = 64;

/// Weight of token overlap for non-identical pairs; keeps partial matches below 1.
pub const OVERLAP_ENTAIL_WEIGHT: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NliMode {
    Identity,
    Negation,
}

#[derive(Clone, Debug)]
pub struct MockNli {
    mode: NliMode,
    id: String,
}

impl MockNli {
    pub fn identity(seed: u64) -> Self {
        Self {
            mode: NliMode::Identity,
            id: format!("mock-identity-nli-{seed}"),
        }
    }

    pub fn negation(seed: u64) -> Self {
        Self {
            mode: NliMode::Negation,
            id: format!("mock-negation-nli-{seed}"),
        }
    }

    pub fn score(&self, premise: &str, hypothesis: &str) -> NliScores {
        let p = collapse_whitespace(premise);
        let h = collapse_whitespace(hypothesis);
        if p == h {
            return NliScores::new(1.0, 0.0, 0.0);
        }
        if self.mode == NliMode::Negation
            && (h.strip_prefix("NOT ") == Some(p.as_str())
                || p.strip_prefix("NOT ") == Some(h.as_str()))
        {
            return NliScores::new(0.0, 1.0, 0.0);
        }
        let hyp: HashSet<String> = tokenize(&h).into_iter().collect();
        if hyp.is_empty() {
            return NliScores::NEUTRAL;
        }
        let prem: HashSet<String> = tokenize(&p).into_iter().collect();
        let shared = hyp.intersection(&prem).count();
        if shared == 0 {
            return NliScores::NEUTRAL;
        }
        let entail = OVERLAP_ENTAIL_WEIGHT * shared as f64 / hyp.len() as f64;
        NliScores::new(entail, 0.0, 1.0 - entail)
    }
}

impl NliProvider for MockNli {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn normalized(&self) -> bool {
        true
    }

    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScores>> {
        Ok(pairs.iter().map(|(p, h)| self.score(p, h)).collect())
    }
}

/// Flags sentences containing a modal of obligation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KeywordObligationClassifier;

pub const OBLIGATION_KEYWORDS: &[&str] = &["must", "shall", "required"];

impl KeywordObligationClassifier {
    pub fn label(sentence: &str) -> ObligationLabel {
        let hit = tokenize(sentence)
            .iter()
            .any(|t| OBLIGATION_KEYWORDS.contains(&t.as_str()));
        ObligationLabel {
            is_obligation: hit,
            confidence: if hit { 1.0 } else { 0.0 },
        }
    }
}

impl ObligationClassifier for KeywordObligationClassifier {
    fn provider_id(&self) -> &str {
        "mock-keyword-obligation"
    }

    fn classify(&self, sentences: &[&str]) -> Result<Vec<ObligationLabel>> {
        Ok(sentences.iter().map(|s| Self::label(s)).collect())
    }
}

/// Returns the user content verbatim.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoChat;

impl ChatModel for EchoChat {
    fn provider_id(&self) -> &str {
        "mock-echo-llm"
    }

    fn chat(&self, _system: &str, user_content: &str, _sampling: &Sampling) -> Result<String> {
        Ok(user_content.to_string())
    }
}

/// Signed feature hashing of word tokens, L2-normalized.
#[derive(Clone, Debug)]
pub struct HashEmbedder {
    seed: u64,
    dimension: usize,
    id: String,
    seed_str: String,
}

impl HashEmbedder {
    pub fn new(seed: u64, dimension: usize) -> Self {
        Self {
            seed,
            dimension: dimension.max(1),
            id: format!("mock-hash-embedding-{seed}"),
            seed_str: seed.to_string(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            let h = hash64(&[&self.seed_str, "\u{0}empty", text]);
            v[(h % self.dimension as u64) as usize] = 1.0;
            return v;
        }
        for t in &tokens {
            let h = hash64(&[&self.seed_str, t]);
            let idx = (h % self.dimension as u64) as usize;
            let sign = if (h >> 63) & 1 == 1 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // every token cancelled out
            let h = hash64(&[&self.seed_str, "\u{0}cancel", text]);
            v[(h % self.dimension as u64) as usize] = 1.0;
            return v;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn model_name(&self) -> &str {
        "hash-embedding-v1"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Returns the first-stage scores unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityRerank;

impl RerankProvider for IdentityRerank {
    fn provider_id(&self) -> &str {
        "mock-identity-rerank"
    }

    fn rerank_scores(&self, _query: &str, _passages: &[String], prior: &[f64]) -> Result<Vec<f64>> {
        Ok(prior.to_vec())
    }
}

/// Scores position i of n as (i + 1) / n, inverting the input order.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReversingRerank;

impl RerankProvider for ReversingRerank {
    fn provider_id(&self) -> &str {
        "mock-reversing-rerank"
    }

    fn rerank_scores(&self, _query: &str, passages: &[String], _prior: &[f64]) -> Result<Vec<f64>> {
        let n = passages.len() as f64;
        Ok((0..passages.len()).map(|i| (i + 1) as f64 / n).collect())
    }
}
