//! Segmentation and recognition graphs over the cut points of a text line.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::langmodel::{case_control_correct, ClassPrior, Vocabulary};
use crate::net::{recalibrate, GlyphClassifier};
use crate::segmentation::GlyphExtract;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeOrigin {
    Original,
    Combined,
}

impl EdgeOrigin {
    pub fn name(self) -> &'static str {
        match self {
            EdgeOrigin::Original => "original",
            EdgeOrigin::Combined => "combined",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegEdge {
    pub from: usize,
    pub to: usize,
    pub glyph: GlyphExtract,
    pub origin: EdgeOrigin,
}

/// DAG on cut points `0..num_nodes`; every edge is a candidate glyph and
/// runs from a lower to a higher node.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationGraph {
    pub num_nodes: usize,
    pub edges: Vec<SegEdge>,
    pairs: HashSet<(usize, usize)>,
}

impl SegmentationGraph {
    /// Linear graph: glyph `i` spans nodes `i → i + 1`.
    pub fn linear(glyphs: Vec<GlyphExtract>) -> SegmentationGraph {
        let num_nodes = glyphs.len() + 1;
        let edges: Vec<SegEdge> = glyphs
            .into_iter()
            .enumerate()
            .map(|(i, glyph)| SegEdge {
                from: i,
                to: i + 1,
                glyph,
                origin: EdgeOrigin::Original,
            })
            .collect();
        let pairs = edges.iter().map(|e| (e.from, e.to)).collect();
        SegmentationGraph { num_nodes, edges, pairs }
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.pairs.contains(&(from, to))
    }

    /// Adds a combined edge unless the node pair is already connected.
    pub fn add_combined(&mut self, from: usize, to: usize, glyph: GlyphExtract) -> Result<bool> {
        if from >= to || to >= self.num_nodes {
            return Err(Error::InvalidParameter(format!("edge {from} → {to} outside graph")));
        }
        if !self.pairs.insert((from, to)) {
            return Ok(false);
        }
        self.edges.push(SegEdge {
            from,
            to,
            glyph,
            origin: EdgeOrigin::Combined,
        });
        Ok(true)
    }

    /// Indices of edges leaving `node`, in insertion order.
    pub fn out_edges(&self, node: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&i| self.edges[i].from == node).collect()
    }

    pub fn combined_count(&self) -> usize {
        self.edges.iter().filter(|e| e.origin == EdgeOrigin::Combined).count()
    }

    /// One edge per line: `from to origin x0 y0 x1 y1`.
    pub fn dump(&self) -> String {
        let mut out = format!("# segmentation graph: {} nodes\n", self.num_nodes);
        for e in self.sorted_edges() {
            let b = &e.glyph.bbox;
            writeln!(out, "{} {} {} {} {} {} {}", e.from, e.to, e.origin.name(), b.x0, b.y0, b.x1, b.y1).unwrap();
        }
        out
    }

    fn sorted_edges(&self) -> Vec<&SegEdge> {
        let mut v: Vec<&SegEdge> = self.edges.iter().collect();
        v.sort_by_key(|e| (e.from, e.to));
        v
    }
}

/// Builds the linear segmentation graph of glyphs in reading order.
pub fn build_seg_graph(glyphs: Vec<GlyphExtract>) -> SegmentationGraph {
    SegmentationGraph::linear(glyphs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub label: usize,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecEdge {
    pub from: usize,
    pub to: usize,
    pub origin: EdgeOrigin,
    /// Best first; at most `M` entries.
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecognitionGraph {
    pub num_nodes: usize,
    pub edges: Vec<RecEdge>,
}

impl RecognitionGraph {
    /// Checks the graph invariants: forward edges, candidate probabilities
    /// in (0, 1], sorted best first.
    pub fn new(num_nodes: usize, edges: Vec<RecEdge>) -> Result<RecognitionGraph> {
        if num_nodes == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        for e in &edges {
            if e.from >= e.to || e.to >= num_nodes {
                return Err(Error::InvalidParameter(format!("edge {} → {} outside graph", e.from, e.to)));
            }
            if e.candidates.iter().any(|c| !(c.p > 0.0 && c.p <= 1.0)) {
                return Err(Error::InvalidParameter(format!("edge {} → {}: probability outside (0, 1]", e.from, e.to)));
            }
            if e.candidates.windows(2).any(|w| w[0].p < w[1].p) {
                return Err(Error::InvalidParameter(format!("edge {} → {}: candidates not sorted", e.from, e.to)));
            }
        }
        Ok(RecognitionGraph { num_nodes, edges })
    }

    /// One edge per line: `from to origin label:p ...`, tokens in place of
    /// ids when a vocabulary is given.
    pub fn dump(&self, vocab: Option<&Vocabulary>) -> String {
        let mut out = format!("# recognition graph: {} nodes\n", self.num_nodes);
        let mut edges: Vec<&RecEdge> = self.edges.iter().collect();
        edges.sort_by_key(|e| (e.from, e.to));
        for e in edges {
            write!(out, "{} {} {}", e.from, e.to, e.origin.name()).unwrap();
            for c in &e.candidates {
                match vocab.and_then(|v| v.token(c.label)) {
                    Some(t) => write!(out, " {t}:{:.6}", c.p).unwrap(),
                    None => write!(out, " {}:{:.6}", c.label, c.p).unwrap(),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// How classifier posteriors become candidate arcs.
#[derive(Clone, Debug, PartialEq)]
pub struct RecognizeParams {
    /// Candidates kept per segmentation edge.
    pub m: usize,
    /// Recalibration exponent applied to the posteriors.
    pub lambda: f64,
    /// Case-control correction towards these priors, when set.
    pub prior: Option<ClassPrior>,
}

impl Default for RecognizeParams {
    fn default() -> Self {
        RecognizeParams {
            m: 5,
            lambda: 1.0,
            prior: None,
        }
    }
}

/// The `m` most probable labels, ties broken by the smaller label.
pub fn top_candidates(probs: &[f64], m: usize) -> Vec<Candidate> {
    let mut c: Vec<Candidate> = probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(label, &p)| Candidate { label, p: p.min(1.0) })
        .collect();
    c.sort_by(|a, b| b.p.total_cmp(&a.p).then(a.label.cmp(&b.label)));
    c.truncate(m);
    c
}

/// Posteriors of one glyph after optional case-control correction and
/// recalibration.
pub fn edge_posteriors(
    classifier: &dyn GlyphClassifier,
    glyph: &GlyphExtract,
    params: &RecognizeParams,
) -> Result<Vec<f64>> {
    let mut p = classifier.classify(&glyph.image, glyph.location())?;
    if let Some(prior) = &params.prior {
        p = case_control_correct(&p, prior)?;
    }
    recalibrate(&p, params.lambda)
}

/// Replaces every segmentation edge by its top-`m` labelled arcs, with one
/// classifier call per edge.
pub fn recognize(
    graph: &SegmentationGraph,
    classifier: &dyn GlyphClassifier,
    params: &RecognizeParams,
) -> Result<RecognitionGraph> {
    if params.m == 0 {
        return Err(Error::InvalidParameter("M must be positive".into()));
    }
    if let Some(prior) = &params.prior {
        if prior.language.len() != classifier.num_classes() {
            return Err(Error::Shape(format!(
                "prior over {} classes for a {}-class classifier",
                prior.language.len(),
                classifier.num_classes()
            )));
        }
    }
    let edges: Result<Vec<RecEdge>> = graph
        .edges
        .par_iter()
        .map(|e| {
            let p = edge_posteriors(classifier, &e.glyph, params)?;
            Ok(RecEdge {
                from: e.from,
                to: e.to,
                origin: e.origin,
                candidates: top_candidates(&p, params.m),
            })
        })
        .collect();
    RecognitionGraph::new(graph.num_nodes, edges?)
}
