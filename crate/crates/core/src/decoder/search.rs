//! Best label sequence through a recognition graph under an n-gram model.
//!
//! A path's score is the sum over its arcs of `ln P(y | context) + ln p̂`.
//! Equal scores are resolved towards the lexicographically smallest label
//! sequence.

use std::collections::BTreeMap;

use super::graph::RecognitionGraph;
use crate::error::{Error, Result};
use crate::langmodel::LanguageModel;

/// Exhaustive search refuses graphs with more path × candidate
/// combinations than this.
pub const BRUTE_FORCE_BUDGET: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub labels: Vec<usize>,
    pub logscore: f64,
    /// Indices of the recognition edges on the chosen path.
    pub edges: Vec<usize>,
}

impl Decoded {
    fn empty() -> Decoded {
        Decoded {
            labels: Vec::new(),
            logscore: 0.0,
            edges: Vec::new(),
        }
    }

    fn beats(&self, other: &Decoded) -> bool {
        self.logscore > other.logscore || (self.logscore == other.logscore && self.labels < other.labels)
    }
}

fn push_context(context: &[usize], y: usize) -> Vec<usize> {
    if context.is_empty() {
        return Vec::new();
    }
    let mut next = context[1..].to_vec();
    next.push(y);
    next
}

fn check(rec: &RecognitionGraph, lm: &dyn LanguageModel) -> Result<()> {
    let k = lm.num_classes();
    if let Some(c) = rec.edges.iter().flat_map(|e| &e.candidates).find(|c| c.label >= k) {
        return Err(Error::Shape(format!("label {} outside a {k}-glyph language model", c.label)));
    }
    Ok(())
}

/// Dynamic programming over states `(node, last n−1 labels)`, equivalent
/// to searching the expanded n-gram graph without building it.
pub fn viterbi(rec: &RecognitionGraph, lm: &dyn LanguageModel) -> Result<Decoded> {
    check(rec, lm)?;
    let h = lm.order().saturating_sub(1);
    let mut states: Vec<BTreeMap<Vec<usize>, Decoded>> = vec![BTreeMap::new(); rec.num_nodes];
    states[0].insert(vec![lm.bos(); h], Decoded::empty());
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); rec.num_nodes];
    for (i, e) in rec.edges.iter().enumerate() {
        out_edges[e.from].push(i);
    }
    for node in 0..rec.num_nodes {
        let here = std::mem::take(&mut states[node]);
        if node == rec.num_nodes - 1 {
            states[node] = here;
            break;
        }
        for (context, best) in &here {
            for &ei in &out_edges[node] {
                let e = &rec.edges[ei];
                for c in &e.candidates {
                    let logscore = best.logscore + lm.cond_prob(context, c.label).ln() + c.p.ln();
                    let next = push_context(context, c.label);
                    let slot = states[e.to].get(&next);
                    if slot.is_some_and(|s| s.logscore > logscore) {
                        continue;
                    }
                    let mut labels = best.labels.clone();
                    labels.push(c.label);
                    let cand = Decoded {
                        labels,
                        logscore,
                        edges: {
                            let mut v = best.edges.clone();
                            v.push(ei);
                            v
                        },
                    };
                    if slot.is_none_or(|s| cand.beats(s)) {
                        states[e.to].insert(next, cand);
                    }
                }
            }
        }
    }
    let mut winner: Option<Decoded> = None;
    for d in states[rec.num_nodes - 1].values() {
        if winner.as_ref().is_none_or(|w| d.beats(w)) {
            winner = Some(d.clone());
        }
    }
    winner.ok_or(Error::NoPath)
}

fn all_paths(rec: &RecognitionGraph) -> Vec<Vec<usize>> {
    let sink = rec.num_nodes - 1;
    let mut paths = Vec::new();
    let mut stack = vec![(0usize, Vec::<usize>::new())];
    while let Some((node, path)) = stack.pop() {
        if node == sink {
            paths.push(path);
            continue;
        }
        for (i, e) in rec.edges.iter().enumerate() {
            if e.from == node {
                let mut p = path.clone();
                p.push(i);
                stack.push((e.to, p));
            }
        }
    }
    paths
}

/// Scores every source-to-sink path with every candidate assignment.
pub fn brute_force_decode(rec: &RecognitionGraph, lm: &dyn LanguageModel) -> Result<Decoded> {
    check(rec, lm)?;
    let paths = all_paths(rec);
    let combos: u128 = paths
        .iter()
        .map(|p| p.iter().map(|&i| rec.edges[i].candidates.len() as u128).product::<u128>())
        .sum();
    if combos > BRUTE_FORCE_BUDGET {
        return Err(Error::BudgetExceeded(combos));
    }
    let h = lm.order().saturating_sub(1);
    let mut winner: Option<Decoded> = None;
    for path in &paths {
        let sizes: Vec<usize> = path.iter().map(|&i| rec.edges[i].candidates.len()).collect();
        if sizes.contains(&0) {
            continue;
        }
        let mut choice = vec![0usize; path.len()];
        loop {
            let mut context = vec![lm.bos(); h];
            let mut logscore = 0.0;
            let mut labels = Vec::with_capacity(path.len());
            for (&ei, &ci) in path.iter().zip(&choice) {
                let c = rec.edges[ei].candidates[ci];
                logscore = logscore + lm.cond_prob(&context, c.label).ln() + c.p.ln();
                context = push_context(&context, c.label);
                labels.push(c.label);
            }
            let d = Decoded {
                labels,
                logscore,
                edges: path.clone(),
            };
            if winner.as_ref().is_none_or(|w| d.beats(w)) {
                winner = Some(d);
            }
            // mixed-radix increment over candidate choices
            let mut i = 0;
            while i < choice.len() {
                choice[i] += 1;
                if choice[i] < sizes[i] {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
            if i == choice.len() {
                break;
            }
        }
    }
    winner.ok_or(Error::NoPath)
}

/// Arc of the explicit n-gram graph: a recognition arc entered with a
/// specific context.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramArc {
    pub from: (usize, Vec<usize>),
    pub to: (usize, Vec<usize>),
    pub label: usize,
    /// Recognition edge the arc came from.
    pub edge: usize,
    /// `P(y | context) · p̂(y | image)`.
    pub strength: f64,
}

/// Expands every recognition arc into one arc per reachable context.
pub fn ngram_graph(rec: &RecognitionGraph, lm: &dyn LanguageModel) -> Result<Vec<NgramArc>> {
    check(rec, lm)?;
    let h = lm.order().saturating_sub(1);
    let mut contexts: Vec<Vec<Vec<usize>>> = vec![Vec::new(); rec.num_nodes];
    contexts[0].push(vec![lm.bos(); h]);
    let mut arcs = Vec::new();
    for node in 0..rec.num_nodes {
        let here = contexts[node].clone();
        for (ei, e) in rec.edges.iter().enumerate().filter(|(_, e)| e.from == node) {
            for ctx in &here {
                for c in &e.candidates {
                    let next = push_context(ctx, c.label);
                    if !contexts[e.to].contains(&next) {
                        contexts[e.to].push(next.clone());
                    }
                    arcs.push(NgramArc {
                        from: (node, ctx.clone()),
                        to: (e.to, next),
                        label: c.label,
                        edge: ei,
                        strength: lm.cond_prob(ctx, c.label) * c.p,
                    });
                }
            }
        }
    }
    Ok(arcs)
}

/// Highest-strength path through an explicit n-gram graph, scored in log
/// space with the same tie-break as [`viterbi`].
pub fn best_ngram_path(arcs: &[NgramArc], num_nodes: usize, start: Vec<usize>) -> Result<Decoded> {
    let mut best: BTreeMap<(usize, Vec<usize>), Decoded> = BTreeMap::new();
    best.insert((0, start), Decoded::empty());
    let mut order: Vec<&NgramArc> = arcs.iter().collect();
    order.sort_by_key(|a| a.from.0);
    for a in order {
        let Some(prev) = best.get(&a.from).cloned() else { continue };
        let mut labels = prev.labels;
        labels.push(a.label);
        let mut edges = prev.edges;
        edges.push(a.edge);
        let cand = Decoded {
            labels,
            logscore: prev.logscore + a.strength.ln(),
            edges,
        };
        let slot = best.get(&a.to);
        if slot.is_none_or(|s| cand.beats(s)) {
            best.insert(a.to.clone(), cand);
        }
    }
    let mut winner: Option<&Decoded> = None;
    for ((node, _), d) in &best {
        if *node == num_nodes - 1 && winner.is_none_or(|w| d.beats(w)) {
            winner = Some(d);
        }
    }
    winner.cloned().ok_or(Error::NoPath)
}
