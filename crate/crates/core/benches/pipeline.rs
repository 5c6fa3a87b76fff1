//! Parallel vs sequential throughput of the two data-parallel stages.
//!
//! `cargo bench -p regrag` times the rayon build at one thread and on the
//! full pool; `cargo bench -p regrag --no-default-features` times the
//! sequential fallback.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regrag::corpus::{AnswerRecord, Corpus, Passage, Question, StrategyTag};
use regrag::orchestrator::score_records;
use regrag::par;
use regrag::providers::{HashEmbedder, IdentityRerank, KeywordObligationClassifier, MockNli};
use regrag::repass::{CoverageThreshold, RepassScorer};
use regrag::retrieval::{RetrievalConfig, Retriever};

const WORDS: &[&str] = &[
    "firm", "must", "client", "record", "report", "regulator", "fund", "capital", "notify", "money", "audit",
    "rule", "annual", "person", "risk", "shall", "licence", "market", "asset", "disclose", "transfer", "review",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(6..16);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s + "."
}

fn text(rng: &mut ChaCha8Rng, sentences: usize) -> String {
    (0..sentences).map(|_| sentence(rng)).collect::<Vec<_>>().join(" ")
}

fn corpus(rng: &mut ChaCha8Rng, n: usize) -> Corpus {
    Corpus::new(
        (0..n)
            .map(|i| {
                let k = rng.gen_range(1..5);
                Passage::new(format!("DOC{}", i / 50), format!("{i}"), text(rng, k))
            })
            .collect(),
    )
    .unwrap()
}

fn modes() -> Vec<(&'static str, usize)> {
    if par::is_parallel() {
        vec![("rayon-1-thread", 1), ("rayon-all-threads", 0)]
    } else {
        vec![("sequential", 0)]
    }
}

fn retrieval(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let corpus = Arc::new(corpus(&mut rng, 3000));
    let questions: Vec<Question> = (0..64).map(|i| Question::new(format!("q{i}"), sentence(&mut rng))).collect();
    let retriever = Retriever::new(
        corpus,
        RetrievalConfig::default(),
        Arc::new(HashEmbedder::new(1, 256)),
        Arc::new(HashEmbedder::new(2, 256)),
        Arc::new(IdentityRerank),
        None,
    )
    .unwrap();
    let mut group = c.benchmark_group("retrieve_all");
    group.sample_size(10);
    for (label, threads) in modes() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| par::with_threads(threads, || retriever.retrieve_all(&questions).unwrap()))
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let corpus = corpus(&mut rng, 400);
    let answers: Vec<AnswerRecord> = (0..128)
        .map(|i| AnswerRecord {
            question_id: format!("q{i}"),
            retrieved_passage_refs: corpus.passages().choose_multiple(&mut rng, 5).map(Passage::reference).collect(),
            answer_text: text(&mut rng, 6),
            strategy_tag: StrategyTag::Vrr,
        })
        .collect();
    let scorer = RepassScorer::new(
        Arc::new(MockNli::negation(0)),
        Arc::new(MockNli::negation(0)),
        Arc::new(KeywordObligationClassifier),
        CoverageThreshold::default(),
    );
    let mut group = c.benchmark_group("score_records");
    group.sample_size(10);
    for (label, threads) in modes() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| par::with_threads(threads, || score_records(&answers, &corpus, &scorer).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, retrieval, scoring);
criterion_main!(benches);
