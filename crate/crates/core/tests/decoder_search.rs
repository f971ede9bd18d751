mod common;

use common::{random_graph, random_lm};
use glyphocr::decoder::{
    best_ngram_path, brute_force_decode, ngram_graph, viterbi, Candidate, EdgeOrigin, RecEdge, RecognitionGraph,
};
use glyphocr::langmodel::{LanguageModel, UniformLm};
use glyphocr::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn edge(from: usize, to: usize, cands: &[(usize, f64)]) -> RecEdge {
    RecEdge {
        from,
        to,
        origin: EdgeOrigin::Original,
        candidates: cands.iter().map(|&(label, p)| Candidate { label, p }).collect(),
    }
}

/// Bigram model given as an explicit table, for hand-checked examples.
struct TableLm {
    k: usize,
    p: Vec<Vec<f64>>,
}

impl LanguageModel for TableLm {
    fn num_classes(&self) -> usize {
        self.k
    }

    fn order(&self) -> usize {
        2
    }

    fn cond_prob(&self, context: &[usize], y: usize) -> f64 {
        self.p[context[0]][y]
    }
}

#[test]
fn figure_seventeen_edge_strength() {
    // glyphs: c = 0, o = 1, e = 2; the start symbol is 3
    let mut p = vec![vec![1.0 / 3.0; 3]; 4];
    p[0] = vec![0.01, 0.09, 0.9];
    let lm = TableLm { k: 3, p };
    let rec = RecognitionGraph::new(3, vec![edge(0, 1, &[(0, 0.9)]), edge(1, 2, &[(1, 0.85), (2, 0.1)])]).unwrap();
    let arcs = ngram_graph(&rec, &lm).unwrap();
    let o = arcs.iter().find(|a| a.from.1 == vec![0] && a.label == 1).unwrap();
    assert_eq!(o.strength, 0.0765);
    assert_eq!(arcs.len(), 3);
}

#[test]
fn explicit_ngram_graph_agrees_with_state_viterbi() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let k = rng.gen_range(3..6);
        let rec = random_graph(&mut rng, k, 2, 8);
        let lm = random_lm(&mut rng, k).with_order(2).unwrap();
        let v = viterbi(&rec, &lm).unwrap();
        let arcs = ngram_graph(&rec, &lm).unwrap();
        let r = best_ngram_path(&arcs, rec.num_nodes, vec![k]).unwrap();
        assert_eq!(v.labels, r.labels);
        assert!((v.logscore - r.logscore).abs() < 1e-9);
    }
}

#[test]
fn viterbi_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..500 {
        let k = rng.gen_range(3..7);
        let rec = random_graph(&mut rng, k, 3, 8);
        let lm = random_lm(&mut rng, k);
        let v = viterbi(&rec, &lm).unwrap();
        let b = brute_force_decode(&rec, &lm).unwrap();
        assert_eq!(v.labels, b.labels);
        assert!((v.logscore - b.logscore).abs() < 1e-9);
        assert!((lm.seq_logprob(&v.labels) + v.edges.iter().zip(&v.labels).map(|(&e, &y)| {
            rec.edges[e].candidates.iter().find(|c| c.label == y).unwrap().p.ln()
        }).sum::<f64>() - v.logscore).abs() < 1e-9);
    }
}

#[test]
fn uniform_model_gives_per_edge_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let edges: Vec<RecEdge> = (0..10)
        .map(|i| RecEdge {
            from: i,
            to: i + 1,
            origin: EdgeOrigin::Original,
            candidates: common::random_candidates(&mut rng, 8, 3),
        })
        .collect();
    let rec = RecognitionGraph::new(11, edges).unwrap();
    let best: Vec<usize> = rec.edges.iter().map(|e| e.candidates[0].label).collect();
    let d = viterbi(&rec, &UniformLm { k: 8, order: 3 }).unwrap();
    assert_eq!(d.labels, best);
}

#[test]
fn ties_go_to_the_smallest_sequence() {
    let rec = RecognitionGraph::new(2, vec![edge(0, 1, &[(2, 0.5), (1, 0.5)])]).unwrap();
    let lm = UniformLm { k: 3, order: 3 };
    assert_eq!(viterbi(&rec, &lm).unwrap().labels, vec![1]);
    assert_eq!(brute_force_decode(&rec, &lm).unwrap().labels, vec![1]);
}

#[test]
fn small_and_degenerate_graphs() {
    let lm = random_lm(&mut ChaCha8Rng::seed_from_u64(4), 4);
    let empty = RecognitionGraph::new(1, vec![]).unwrap();
    for d in [viterbi(&empty, &lm).unwrap(), brute_force_decode(&empty, &lm).unwrap()] {
        assert!(d.labels.is_empty());
        assert_eq!(d.logscore, 0.0);
    }
    let single = RecognitionGraph::new(2, vec![edge(0, 1, &[(0, 0.6), (3, 0.4)])]).unwrap();
    let d = brute_force_decode(&single, &lm).unwrap();
    let s0 = 0.6 * lm.prob(4, 4, 0);
    let s3 = 0.4 * lm.prob(4, 4, 3);
    assert_eq!(d.labels, vec![if s0 >= s3 { 0 } else { 3 }]);
    let gap = RecognitionGraph::new(3, vec![edge(0, 1, &[(0, 1.0)])]).unwrap();
    assert!(matches!(viterbi(&gap, &lm), Err(Error::NoPath)));
    assert!(matches!(brute_force_decode(&gap, &lm), Err(Error::NoPath)));
    let bad = RecognitionGraph::new(2, vec![edge(0, 1, &[(9, 1.0)])]).unwrap();
    assert!(viterbi(&bad, &lm).is_err());
}

#[test]
fn brute_force_budget() {
    let edges: Vec<RecEdge> = (0..13)
        .map(|i| edge(i, i + 1, &[(0, 0.4), (1, 0.3), (2, 0.2), (3, 0.1)]))
        .collect();
    let rec = RecognitionGraph::new(14, edges).unwrap();
    let lm = UniformLm { k: 4, order: 3 };
    assert!(matches!(brute_force_decode(&rec, &lm), Err(Error::BudgetExceeded(n)) if n == 4u128.pow(13)));
    assert!(viterbi(&rec, &lm).is_ok());
}

#[test]
fn more_candidates_never_lower_the_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let k = 6;
        let rec = random_graph(&mut rng, k, 3, 8);
        let lm = random_lm(&mut rng, k);
        let mut prev = f64::NEG_INFINITY;
        for m in 1..=3 {
            let mut r = rec.clone();
            for e in &mut r.edges {
                e.candidates.truncate(m);
            }
            let s = viterbi(&r, &lm).unwrap().logscore;
            assert!(s >= prev);
            prev = s;
        }
    }
}

#[test]
fn invalid_graphs_are_rejected() {
    assert!(RecognitionGraph::new(2, vec![edge(1, 1, &[(0, 1.0)])]).is_err());
    assert!(RecognitionGraph::new(2, vec![edge(0, 2, &[(0, 1.0)])]).is_err());
    assert!(RecognitionGraph::new(2, vec![edge(0, 1, &[(0, 0.2), (1, 0.7)])]).is_err());
    assert!(RecognitionGraph::new(2, vec![edge(0, 1, &[(0, 0.0)])]).is_err());
    assert!(RecognitionGraph::new(0, vec![]).is_err());
}
