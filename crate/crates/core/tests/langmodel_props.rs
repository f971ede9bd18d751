use glyphocr::langmodel::{case_control_correct, train_ngram, ClassPrior, LanguageModel};
use proptest::prelude::*;

fn corpus_strategy(k: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    proptest::collection::vec(proptest::collection::vec(0..k, 1..15), 1..20)
}

proptest! {
    #[test]
    fn observed_contexts_normalize(corpus in corpus_strategy(6)) {
        let t = train_ngram(&corpus, 6).unwrap();
        for ((c2, c1), _) in t.contexts() {
            let s: f64 = (0..6).map(|y| t.prob(c2, c1, y)).sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "context ({}, {}) sums to {}", c2, c1, s);
        }
    }

    #[test]
    fn unseen_glyph_never_helps(
        sentence in proptest::collection::vec(0usize..4, 3..12),
        pos in any::<prop::sample::Index>(),
    ) {
        // glyph 4 never occurs in the corpus
        let t = train_ngram(&vec![sentence.clone(); 3], 5).unwrap();
        let mut altered = sentence.clone();
        altered[pos.index(sentence.len())] = 4;
        prop_assert!(t.seq_logprob(&sentence) >= t.seq_logprob(&altered));
    }

    #[test]
    fn uniform_priors_are_identity(raw in proptest::collection::vec(0.001f64..1.0, 2..10)) {
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let q = case_control_correct(&p, &ClassPrior::uniform(p.len())).unwrap();
        prop_assert_eq!(&q, &p);
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn file_round_trip_preserves_probabilities() {
    let corpus = vec![vec![0, 1, 2, 3], vec![3, 2, 1], vec![0, 0, 0, 1]];
    let t = train_ngram(&corpus, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lm.txt");
    t.save(&path).unwrap();
    let back = glyphocr::langmodel::TrigramTable::load(&path).unwrap();
    for c2 in 0..5 {
        for c1 in 0..5 {
            for y in 0..4 {
                assert_eq!(t.prob(c2, c1, y), back.prob(c2, c1, y));
            }
        }
    }
}
