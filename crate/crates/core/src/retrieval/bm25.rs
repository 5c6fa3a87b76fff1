//! Okapi BM25 over an inverted index.
//!
//! score(q, p) = Σ_{t ∈ q} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|p|/avgdl))
//! with idf(t) = ln((N − df + 0.5)/(df + 0.5) + 1). Repeated query tokens
//! contribute once per occurrence.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PassageRef};
use crate::error::{Error, Result};
use crate::retrieval::{check_k, sort_and_rank, ScoredPassage};
use crate::text::tokenize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let p = Self { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::config(format!("bm25 k1 must be positive, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::config(format!("bm25 b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    ((n_docs as f64 - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
}

pub fn term_score(params: &Bm25Params, idf: f64, tf: f64, doc_len: f64, avg_len: f64) -> f64 {
    idf * (tf * (params.k1 + 1.0))
        / (tf + params.k1 * (1.0 - params.b + params.b * doc_len / avg_len))
}

#[derive(Clone, Debug)]
pub struct Bm25Index {
    params: Bm25Params,
    refs: Vec<PassageRef>,
    doc_len: Vec<u32>,
    avg_len: f64,
    /// term → (passage index, term frequency), passage indices ascending
    postings: HashMap<String, Vec<(u32, u32)>>,
}

impl Bm25Index {
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(Error::invalid("cannot index an empty corpus"));
        }
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(corpus.len());
        for (i, p) in corpus.passages().iter().enumerate() {
            let tokens = tokenize(&p.text);
            doc_len.push(tokens.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i as u32, n));
            }
        }
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avg = total as f64 / corpus.len() as f64;
        Ok(Self {
            params,
            refs: corpus.passages().iter().map(|p| p.reference()).collect(),
            doc_len,
            // an all-empty corpus has no matching terms; any positive value works
            avg_len: if avg > 0.0 { avg } else { 1.0 },
            postings,
        })
    }

    pub fn params(&self) -> &Bm25Params {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// BM25 score of every passage, in corpus order.
    pub fn score_all(&self, query: &str) -> Vec<f64> {
        let mut acc = vec![0.0; self.refs.len()];
        let n = self.refs.len();
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let w = idf(n, list.len());
            for &(doc, tf) in list {
                let d = doc as usize;
                acc[d] += term_score(
                    &self.params,
                    w,
                    tf as f64,
                    self.doc_len[d] as f64,
                    self.avg_len,
                );
            }
        }
        acc
    }

    pub fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredPassage>> {
        check_k(k)?;
        let scores = self.score_all(query);
        let mut list: Vec<ScoredPassage> = self
            .refs
            .iter()
            .zip(scores)
            .map(|(r, s)| ScoredPassage::new(r.clone(), s))
            .collect();
        sort_and_rank(&mut list);
        list.truncate(k);
        Ok(list)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Passage::new("d", format!("p{i}"), *t))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_passage_matches_hand_evaluation() {
        // N = 1, df = 1: idf = ln(0.5/1.5 + 1) = ln(4/3); |p| = avgdl = 2, tf = 1
        // score = ln(4/3) · 2.5 / (1 + 1.5) = ln(4/3)
        let idx = Bm25Index::build(&corpus(&["a b"]), Bm25Params::default()).unwrap();
        let hits = idx.search("a", 1).unwrap();
        let expected = (4.0f64 / 3.0).ln();
        assert!(hits[0].raw_score > 0.0);
        assert!((hits[0].raw_score - expected).abs() < 1e-12);
    }

    #[test]
    fn absent_terms_contribute_nothing() {
        let idx = Bm25Index::build(&corpus(&["a b", "b c"]), Bm25Params::default()).unwrap();
        assert_eq!(idx.score_all("a zzz"), idx.score_all("a"));
        let hits = idx.search("zzz qqq", 10).unwrap();
        assert!(hits.iter().all(|h| h.raw_score == 0.0));
        assert_eq!(hits[0].key, "d#p0");
        assert_eq!(hits[1].key, "d#p1");
    }

    #[test]
    fn identical_passages_score_identically() {
        let idx =
            Bm25Index::build(&corpus(&["firms must file", "x y", "firms must file"]), Bm25Params::default())
                .unwrap();
        let s = idx.score_all("firms file report");
        assert_eq!(s[0], s[2]);
    }

    #[test]
    fn k_larger_than_corpus_returns_everything() {
        let idx = Bm25Index::build(&corpus(&["a", "b", "c"]), Bm25Params::default()).unwrap();
        assert_eq!(idx.search("a", 50).unwrap().len(), 3);
        assert!(idx.search("a", 0).is_err());
    }

    #[test]
    fn empty_corpus_and_bad_params_fail() {
        assert!(Bm25Index::build(&Corpus::default(), Bm25Params::default()).is_err());
        assert!(Bm25Params::new(0.0, 0.5).is_err());
        assert!(Bm25Params::new(1.2, 1.5).is_err());
    }
}
