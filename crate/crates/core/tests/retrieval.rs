mod common;

use common::{hand_fused, oracle_bm25, random_corpus, random_list, random_query};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regrag::corpus::PassageRef;
use regrag::retrieval::{fuse, normalize_scores, Bm25Index, Bm25Params, FusionWeights, ScoredPassage};

#[test]
fn bm25_matches_brute_force_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = Bm25Params::default();
    for _ in 0..200 {
        let corpus = random_corpus(&mut rng, 100);
        let query = random_query(&mut rng);
        let texts: Vec<String> = corpus.passages().iter().map(|p| p.text.clone()).collect();
        let expected = oracle_bm25(&texts, &query, params.k1, params.b);
        let idx = Bm25Index::build(&corpus, params).unwrap();
        let hits = idx.search(&query, corpus.len()).unwrap();
        assert_eq!(hits.len(), corpus.len());
        for (rank, h) in hits.iter().enumerate() {
            let pos = corpus.position(&h.passage).unwrap();
            assert!((h.raw_score - expected[pos]).abs() < 1e-9, "{query:?} {}", h.key);
            assert_eq!(h.rank, rank + 1);
        }
        for w in hits.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (ea, eb) = (
                expected[corpus.position(&a.passage).unwrap()],
                expected[corpus.position(&b.passage).unwrap()],
            );
            assert!(ea >= eb - 1e-9);
            if a.raw_score == b.raw_score {
                assert!(a.key < b.key, "tie order {} {}", a.key, b.key);
            }
        }
    }
}

#[test]
fn bm25_truncates_to_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let corpus = random_corpus(&mut rng, 40);
    let idx = Bm25Index::build(&corpus, Bm25Params::default()).unwrap();
    let all = idx.search("firm must report", corpus.len()).unwrap();
    let top = idx.search("firm must report", 3).unwrap();
    assert_eq!(top[..], all[..top.len()]);
}

#[test]
fn fusion_matches_hand_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let (x, y, z) = (random_list(&mut rng, 30), random_list(&mut rng, 30), random_list(&mut rng, 30));
        let a = rng.gen_range(0.0..1.0);
        let b = rng.gen_range(0.0..(1.0 - a));
        let k = rng.gen_range(1..=60);
        let got = fuse([&x, &y, &z], FusionWeights::new(a, b).unwrap(), k).unwrap();
        let want = hand_fused([&x, &y, &z], a, b);
        assert_eq!(got.len(), want.len().min(k));
        for (g, (key, f)) in got.iter().zip(&want) {
            assert_eq!(&g.key, key);
            assert!((g.raw_score - f).abs() <= 1e-12);
        }
    }
}

#[test]
fn degenerate_weights_reduce_to_one_retriever() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        let (x, y, z) = (random_list(&mut rng, 25), random_list(&mut rng, 25), random_list(&mut rng, 25));
        for (w, only) in [((1.0, 0.0), &x), ((0.0, 1.0), &y)] {
            let fused = fuse([&x, &y, &z], FusionWeights::new(w.0, w.1).unwrap(), 100).unwrap();
            // passages of the selected list come first in its own order (up to
            // the key tie rule); everything else scores zero
            let mut expected: Vec<(String, f64)> =
                only.iter().map(|p| (p.key.clone(), p.normalized_score.unwrap())).collect();
            expected.sort_by(|p, q| q.1.total_cmp(&p.1).then_with(|| p.0.cmp(&q.0)));
            for (f, (k, s)) in fused.iter().zip(&expected) {
                if *s > 0.0 {
                    assert_eq!(&f.key, k);
                    assert_eq!(f.raw_score, *s);
                }
            }
            assert!(fused.iter().skip_while(|p| p.raw_score > 0.0).all(|p| p.raw_score == 0.0));
        }
    }
}

#[test]
fn fusion_rejects_unnormalized_input_and_bad_weights() {
    let raw = vec![ScoredPassage::new(PassageRef::new("D", "1"), 3.0)];
    let ok = normalize_scores(&raw).unwrap();
    assert!(fuse([&raw, &ok, &ok], FusionWeights::default(), 10).is_err());
    assert!(FusionWeights::new(0.8, 0.3).is_err());
    assert!(FusionWeights::new(-0.1, 0.3).is_err());
    assert!(FusionWeights::new(0.7, 0.3).is_ok());
}
