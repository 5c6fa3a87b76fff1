//! Independent oracles and test doubles shared by the integration tests.
//! Nothing here calls into the crate's own scoring code.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use regrag::corpus::{Corpus, Passage, PassageRef};
use regrag::providers::{ChatModel, NliProvider, NliScores, Sampling};
use regrag::Result;

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

// ---- BM25 ----

pub fn oracle_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Okapi BM25 (k1, b) of every document, computed from scratch.
pub fn oracle_bm25(docs: &[String], query: &str, k1: f64, b: f64) -> Vec<f64> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| oracle_tokens(d)).collect();
    let n = docs.len() as f64;
    let avg = {
        let total: usize = toks.iter().map(Vec::len).sum();
        let a = total as f64 / n;
        if a > 0.0 { a } else { 1.0 }
    };
    let q = oracle_tokens(query);
    toks.iter()
        .map(|d| {
            let len = d.len() as f64;
            q.iter()
                .map(|t| {
                    let df = toks.iter().filter(|x| x.contains(t)).count() as f64;
                    let tf = d.iter().filter(|x| *x == t).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg))
                })
                .sum()
        })
        .collect()
}

const VOCAB: &[&str] = &[
    "firm", "must", "shall", "client", "record", "report", "regulator", "fund", "capital", "notify",
    "money", "audit", "rule", "annual", "person", "risk",
];

pub fn random_text<R: Rng>(rng: &mut R, max_tokens: usize) -> String {
    let n = rng.gen_range(1..=max_tokens.max(1));
    let words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
    words.join(if rng.gen_bool(0.5) { " " } else { ", " })
}

pub fn random_corpus<R: Rng>(rng: &mut R, max_passages: usize) -> Corpus {
    let n = rng.gen_range(1..=max_passages);
    let passages = (0..n)
        .map(|i| Passage::new(format!("D{}", i % 3), format!("{i:03}"), random_text(rng, 20)))
        .collect();
    Corpus::new(passages).unwrap()
}

pub fn random_query<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=8);
    (0..n)
        .map(|_| if rng.gen_bool(0.9) { *VOCAB.choose(rng).unwrap() } else { "unseen" })
        .collect::<Vec<_>>()
        .join(" ")
}

// ---- retrieval metrics ----

pub fn oracle_recall(ranked: &[PassageRef], gold: &[PassageRef], k: usize) -> f64 {
    let top: Vec<&PassageRef> = ranked.iter().take(k).collect();
    let gold_set: HashSet<&PassageRef> = gold.iter().collect();
    let found = gold_set.iter().filter(|g| top.contains(g)).count();
    found as f64 / gold_set.len() as f64
}

pub fn oracle_ap(ranked: &[PassageRef], gold: &[PassageRef], k: usize) -> f64 {
    let gold_set: HashSet<&PassageRef> = gold.iter().collect();
    let mut seen: Vec<&PassageRef> = Vec::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, r) in ranked.iter().take(k).enumerate() {
        let first = !seen.contains(&r);
        seen.push(r);
        if first && gold_set.contains(r) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / gold_set.len().min(k) as f64
}

// ---- NLI and chat doubles ----

/// NLI provider backed by a fixed table; unknown pairs are neutral.
pub struct TableNli {
    pub table: HashMap<(String, String), NliScores>,
}

impl TableNli {
    /// Table over `premises × hypotheses` with independent random
    /// entailment and contradiction probabilities (normalized triples).
    pub fn random<R: Rng>(rng: &mut R, premises: &[String], hypotheses: &[String]) -> Self {
        let mut table = HashMap::new();
        for p in premises {
            for h in hypotheses {
                let e: f64 = rng.gen();
                let c: f64 = rng.gen::<f64>() * (1.0 - e);
                table.insert((p.clone(), h.clone()), NliScores::new(e, c, 1.0 - e - c));
            }
        }
        Self { table }
    }
}

impl NliProvider for TableNli {
    fn provider_id(&self) -> &str {
        "table"
    }
    fn normalized(&self) -> bool {
        false
    }
    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScores>> {
        Ok(pairs
            .iter()
            .map(|(p, h)| {
                self.table
                    .get(&(p.to_string(), h.to_string()))
                    .copied()
                    .unwrap_or(NliScores::NEUTRAL)
            })
            .collect())
    }
}

/// Brute-force mean over rows of the max over columns.
pub fn oracle_mean_max(rows: &[Vec<f64>]) -> f64 {
    let maxes: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    maxes.iter().sum::<f64>() / maxes.len() as f64
}

/// Returns the answer with every listed obligation appended.
pub struct AppendingChat;

impl ChatModel for AppendingChat {
    fn provider_id(&self) -> &str {
        "appending"
    }
    fn chat(&self, _: &str, user: &str, _: &Sampling) -> Result<String> {
        let (answer, obligations) = user
            .strip_prefix("Answer: ")
            .and_then(|r| r.split_once("\n\nObligations:\n"))
            .expect("insertion prompt layout");
        let mut parts = vec![answer.to_string()];
        parts.extend(obligations.lines().filter_map(|l| l.strip_prefix("- ")).map(str::to_string));
        Ok(regrag::repass::join_sentences(&parts))
    }
}

/// Counts calls made to an inner chat model.
pub struct CountingChat<C> {
    pub inner: C,
    pub calls: AtomicUsize,
    pub prompts: Mutex<Vec<String>>,
}

impl<C> CountingChat<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, calls: AtomicUsize::new(0), prompts: Mutex::new(Vec::new()) }
    }
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<C: ChatModel> ChatModel for CountingChat<C> {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }
    fn chat(&self, system: &str, user: &str, s: &Sampling) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(user.to_string());
        self.inner.chat(system, user, s)
    }
}

/// Never mentions anything from the prompt, so coverage always fails.
pub struct OffTopicChat;

impl ChatModel for OffTopicChat {
    fn provider_id(&self) -> &str {
        "off-topic"
    }
    fn chat(&self, _: &str, _: &str, s: &Sampling) -> Result<String> {
        Ok(format!("Zebras graze at dawn {}.", s.seed))
    }
}

// ---- retrieval lists ----

use regrag::retrieval::{normalize_scores, sort_and_rank, ScoredPassage};

/// A normalized, ranked list over a random subset of `pool` passage ids.
pub fn random_list<R: Rng>(rng: &mut R, pool: usize) -> Vec<ScoredPassage> {
    let n = rng.gen_range(1..=pool);
    let mut ids: Vec<usize> = (0..pool).collect();
    ids.shuffle(rng);
    let mut list: Vec<ScoredPassage> = ids[..n]
        .iter()
        .map(|i| ScoredPassage::new(PassageRef::new("D", format!("{i:02}")), rng.gen_range(-5.0..20.0)))
        .collect();
    sort_and_rank(&mut list);
    normalize_scores(&list).unwrap()
}

fn lookup(list: &[ScoredPassage], key: &str) -> f64 {
    list.iter()
        .find(|p| p.key == key)
        .map_or(0.0, |p| p.normalized_score.unwrap())
}

/// Weighted fusion computed by hand over the union, sorted with the tie rule.
pub fn hand_fused(lists: [&[ScoredPassage]; 3], a: f64, b: f64) -> Vec<(String, f64)> {
    let mut keys: Vec<String> = lists.iter().flat_map(|l| l.iter().map(|p| p.key.clone())).collect();
    keys.sort();
    keys.dedup();
    let c = 1.0 - (a + b);
    let mut out: Vec<(String, f64)> = keys
        .into_iter()
        .map(|k| {
            let f = a * lookup(lists[0], &k) + b * lookup(lists[1], &k) + c * lookup(lists[2], &k);
            (k, f)
        })
        .collect();
    out.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    out
}

/// A ranked list whose normalized scores are exactly `scores`.
pub fn normalized_list(scores: &[f64]) -> Vec<ScoredPassage> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut p = ScoredPassage::new(PassageRef::new("D", format!("{i}")), s);
            p.normalized_score = Some(s);
            p.rank = i + 1;
            p
        })
        .collect()
}

// ---- sentences and passages ----

/// Distinct one-sentence clauses; two thirds carry the modal "must".
pub fn sentence_pool(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let modal = if i % 3 == 0 { "may" } else { "must" };
            format!("Rule {i} {modal} bind entity {}.", i * 3 % 7)
        })
        .collect()
}

pub fn random_passages<R: Rng>(rng: &mut R, pool: &[String]) -> Vec<Passage> {
    (0..rng.gen_range(1..4))
        .map(|i| {
            let k = rng.gen_range(1..5);
            let text = pool.choose_multiple(rng, k).cloned().collect::<Vec<_>>().join(" ");
            Passage::new("D", format!("{i}"), text)
        })
        .collect()
}

pub fn random_answer<R: Rng>(rng: &mut R, pool: &[String]) -> String {
    let k = rng.gen_range(1..6);
    pool.choose_multiple(rng, k).cloned().collect::<Vec<_>>().join(" ")
}

/// Answers generation prompts with a pool answer picked by the sampling
/// seed and appends missing obligations on insertion prompts.
pub struct PoolChat(pub Vec<String>);

impl ChatModel for PoolChat {
    fn provider_id(&self) -> &str {
        "pool"
    }
    fn chat(&self, system: &str, user: &str, s: &Sampling) -> Result<String> {
        if user.starts_with("Answer: ") {
            return AppendingChat.chat(system, user, s);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s.seed ^ user.len() as u64);
        Ok(random_answer(&mut rng, &self.0))
    }
}

pub fn toy_config(out: &std::path::Path) -> regrag::orchestrator::RunConfig {
    let mut cfg = regrag::orchestrator::RunConfig::load(&toy_dir().join("config.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}
