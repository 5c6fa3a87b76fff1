mod common;

use std::sync::Arc;

use common::{oracle_mean_max, sentence_pool, TableNli};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regrag::corpus::Passage;
use regrag::generation::generate_noc;
use regrag::providers::{KeywordObligationClassifier, MockNli, NliProvider, NliScores};
use regrag::repass::{
    aggregate, extract_obligations, segment_sentences, CoverageThreshold, ExtractionMode, RepassScorer,
};

const TAU: f64 = 0.7;

fn scorer(nli: Arc<dyn NliProvider>) -> RepassScorer {
    RepassScorer::new(
        Arc::clone(&nli),
        nli,
        Arc::new(KeywordObligationClassifier),
        CoverageThreshold::new(TAU).unwrap(),
    )
}

struct Instance {
    passages: Vec<Passage>,
    answer: Vec<String>,
    nli: TableNli,
}

fn instance<R: Rng>(rng: &mut R, pool: &[String]) -> Instance {
    let passages: Vec<Passage> = (0..rng.gen_range(1..4))
        .map(|i| {
            let k = rng.gen_range(1..5);
            let text = pool.choose_multiple(rng, k).cloned().collect::<Vec<_>>().join(" ");
            Passage::new("D", format!("{i}"), text)
        })
        .collect();
    let n = rng.gen_range(1..5);
    let answer: Vec<String> = pool.choose_multiple(rng, n).cloned().collect();
    // one table serves both directions: (premise, answer sentence) and
    // (answer sentence, obligation)
    let nli = TableNli::random(rng, pool, pool);
    Instance { passages, answer, nli }
}

fn oracle(inst: &Instance) -> (f64, f64, f64) {
    let premises: Vec<String> = inst
        .passages
        .iter()
        .flat_map(|p| segment_sentences(&p.text).unwrap().sentences)
        .collect();
    let lookup = |p: &str, h: &str| inst.nli.table[&(p.to_string(), h.to_string())];
    let rows = |f: fn(&NliScores) -> f64| -> Vec<Vec<f64>> {
        inst.answer
            .iter()
            .map(|a| premises.iter().map(|p| f(&lookup(p, a))).collect())
            .collect()
    };
    let es = oracle_mean_max(&rows(|s| s.entail));
    let cs = oracle_mean_max(&rows(|s| s.contradict));
    let obligations: Vec<&String> = premises.iter().filter(|s| s.contains(" must ")).collect();
    let ocs = if obligations.is_empty() {
        1.0
    } else {
        let covered = obligations
            .iter()
            .filter(|o| inst.answer.iter().any(|a| lookup(a, o).entail >= TAU))
            .count();
        covered as f64 / obligations.len() as f64
    };
    (es, cs, ocs)
}

#[test]
fn components_match_brute_force() {
    let pool = sentence_pool(12);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..300 {
        let inst = instance(&mut rng, &pool);
        let (es, cs, ocs) = oracle(&inst);
        let refs: Vec<&Passage> = inst.passages.iter().collect();
        let nli: Arc<dyn NliProvider> = Arc::new(TableNli { table: inst.nli.table.clone() });
        let report = scorer(nli).score(&inst.answer.join(" "), &refs).unwrap();
        assert!((report.es - es).abs() < 1e-12);
        assert!((report.cs - cs).abs() < 1e-12);
        assert!((report.ocs - ocs).abs() < 1e-12);
        assert!((report.repass - aggregate(es, cs, ocs)).abs() < 1e-12);
        report.check().unwrap();
    }
}

#[test]
fn invariant_to_sentence_order_and_duplicate_passages() {
    let pool = sentence_pool(10);
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..200 {
        let mut inst = instance(&mut rng, &pool);
        let nli: Arc<dyn NliProvider> = Arc::new(TableNli { table: inst.nli.table.clone() });
        let s = scorer(nli);
        let refs: Vec<&Passage> = inst.passages.iter().collect();
        let a = s.score(&inst.answer.join(" "), &refs).unwrap();
        inst.answer.shuffle(&mut rng);
        let doubled: Vec<&Passage> = refs.iter().chain(refs.iter()).copied().collect();
        let b = s.score(&inst.answer.join(" "), &doubled).unwrap();
        assert!((a.es - b.es).abs() < 1e-12);
        assert!((a.cs - b.cs).abs() < 1e-12);
        assert!((a.ocs - b.ocs).abs() < 1e-12);
    }
}

#[test]
fn adding_answer_sentences_never_lowers_coverage() {
    let pool = sentence_pool(10);
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..200 {
        let inst = instance(&mut rng, &pool);
        let nli: Arc<dyn NliProvider> = Arc::new(TableNli { table: inst.nli.table.clone() });
        let s = scorer(nli);
        let refs: Vec<&Passage> = inst.passages.iter().collect();
        let before = s.score(&inst.answer.join(" "), &refs).unwrap().ocs;
        let extra = pool.choose(&mut rng).unwrap();
        let after = s.score(&format!("{} {extra}", inst.answer.join(" ")), &refs).unwrap().ocs;
        assert!(after >= before);
    }
}

#[test]
fn concatenated_obligations_score_perfectly_under_identity_nli() {
    let pool = sentence_pool(9);
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let classifier = KeywordObligationClassifier;
    for _ in 0..100 {
        let inst = instance(&mut rng, &pool);
        let refs: Vec<&Passage> = inst.passages.iter().collect();
        let obligations = extract_obligations(&refs, &classifier, ExtractionMode::Metric).unwrap();
        if obligations.is_empty() {
            continue;
        }
        let noc = generate_noc(&obligations).unwrap();
        let report = scorer(Arc::new(MockNli::identity(0))).score(&noc.text, &refs).unwrap();
        assert_eq!((report.es, report.cs, report.ocs, report.repass), (1.0, 0.0, 1.0, 1.0));
    }
}

#[test]
fn passages_without_obligations_give_full_coverage() {
    let p = Passage::new("D", "1", "Firms may keep records. Clients can ask.");
    let report = scorer(Arc::new(MockNli::identity(0)))
        .score("Something unrelated entirely.", &[&p])
        .unwrap();
    assert_eq!(report.total_obligations, 0);
    assert_eq!(report.ocs, 1.0);
}

#[test]
fn negated_sentence_is_fully_contradicted() {
    let p = Passage::new("D", "1", "The firm must notify the regulator.");
    let report = scorer(Arc::new(MockNli::negation(0)))
        .score("NOT The firm must notify the regulator.", &[&p])
        .unwrap();
    assert_eq!(report.cs, 1.0);
    assert_eq!(report.ocs, 0.0);
}
