//! Heuristic over-segmentation: adds edges that join consecutive pieces
//! which look like fragments of one broken glyph.

use rayon::prelude::*;

use super::graph::{top_candidates, Candidate, SegmentationGraph};
use crate::error::{Error, Result};
use crate::langmodel::TrigramTable;
use crate::net::GlyphClassifier;
use crate::segmentation::GlyphExtract;

/// Cap on the bigram surprise feature.
pub const MAX_SURPRISE: f64 = 20.0;

/// Per-feature weights of the combination score, a constant term and the
/// threshold the score must exceed.
///
/// Feature order: smaller ink area / pitch², smaller box width / pitch,
/// horizontal overlap / narrower width, −gap / pitch, 1 − top probability
/// of each piece, −ln of the bigram probability of their top labels.
#[derive(Clone, Debug, PartialEq)]
pub struct CombineRuleWeights {
    pub bias: f64,
    pub small_ink: f64,
    pub narrow: f64,
    pub overlap: f64,
    pub gap: f64,
    pub unsure_left: f64,
    pub unsure_right: f64,
    pub bigram: f64,
    pub threshold: f64,
}

impl Default for CombineRuleWeights {
    fn default() -> Self {
        // calibrated on broken-glyph pages: fragments sit at most two
        // columns apart, neighbouring glyphs at least six
        CombineRuleWeights {
            bias: 4.0,
            small_ink: -2.0,
            narrow: -1.0,
            overlap: 1.0,
            gap: 50.0,
            unsure_left: 0.5,
            unsure_right: 0.5,
            bigram: 0.05,
            threshold: 1.0,
        }
    }
}

impl CombineRuleWeights {
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.small_ink,
            self.narrow,
            self.overlap,
            self.gap,
            self.unsure_left,
            self.unsure_right,
            self.bigram,
        ]
    }

    /// All weights zero: nothing is ever combined.
    pub fn never() -> Self {
        CombineRuleWeights {
            bias: 0.0,
            small_ink: 0.0,
            narrow: 0.0,
            overlap: 0.0,
            gap: 0.0,
            unsure_left: 0.0,
            unsure_right: 0.0,
            bigram: 0.0,
            threshold: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|w| !w.is_finite())
            || !self.bias.is_finite() || !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid combination weights {self:?}")));
        }
        Ok(())
    }
}

/// Scale-free description of two consecutive pieces, in the order of
/// [`CombineRuleWeights::as_array`].
pub fn pair_features(
    g1: &GlyphExtract,
    g2: &GlyphExtract,
    top1: Candidate,
    top2: Candidate,
    lm: Option<&TrigramTable>,
) -> [f64; 7] {
    let pitch = g1.pitch;
    let (b1, b2) = (&g1.bbox, &g2.bbox);
    let narrower = b1.width().min(b2.width()).max(1) as f64;
    let gap = b2.x0 as f64 - b1.x1 as f64;
    let surprise = lm.map_or(0.0, |t| (-t.bigram(top1.label, top2.label).ln()).min(MAX_SURPRISE));
    [
        g1.ink().min(g2.ink()) as f64 / (pitch * pitch),
        b1.width().min(b2.width()) as f64 / pitch,
        b1.horizontal_overlap(b2) as f64 / narrower,
        -gap / pitch,
        1.0 - top1.p,
        1.0 - top2.p,
        surprise,
    ]
}

/// Bias plus the weighted sum of [`pair_features`].
pub fn combine_score(
    g1: &GlyphExtract,
    g2: &GlyphExtract,
    top1: Candidate,
    top2: Candidate,
    lm: Option<&TrigramTable>,
    weights: &CombineRuleWeights,
) -> f64 {
    weights.bias
        + pair_features(g1, g2, top1, top2, lm)
            .iter()
            .zip(weights.as_array())
            .map(|(f, w)| if w == 0.0 { 0.0 } else { f * w })
            .sum::<f64>()
}

fn top_of(classifier: &dyn GlyphClassifier, g: &GlyphExtract) -> Result<Candidate> {
    let p = classifier.classify(&g.image, g.location())?;
    top_candidates(&p, 1)
        .first()
        .copied()
        .ok_or_else(|| Error::InvalidParameter("classifier returned no positive probability".into()))
}

/// Walks the nodes from the last to the first and joins every child edge
/// with every grandchild edge whose pair scores above the threshold.
/// Joined edges count as children at once, so runs of three or more
/// pieces can merge. Existing edges are kept.
pub fn oversegment(
    graph: &SegmentationGraph,
    classifier: &dyn GlyphClassifier,
    lm: Option<&TrigramTable>,
    weights: &CombineRuleWeights,
) -> Result<SegmentationGraph> {
    weights.validate()?;
    let mut out = graph.clone();
    let tops: Result<Vec<Candidate>> = out.edges.par_iter().map(|e| top_of(classifier, &e.glyph)).collect();
    let mut tops = tops?;
    for node in (0..out.num_nodes.saturating_sub(1)).rev() {
        let mut seen = 0;
        loop {
            let children = out.out_edges(node);
            let Some(&child) = children.get(seen) else { break };
            seen += 1;
            let mid = out.edges[child].to;
            for grand in out.out_edges(mid) {
                let to = out.edges[grand].to;
                if out.has_edge(node, to) {
                    continue;
                }
                let (a, b) = (&out.edges[child], &out.edges[grand]);
                if combine_score(&a.glyph, &b.glyph, tops[child], tops[grand], lm, weights) > weights.threshold {
                    let merged = a.glyph.merge(&b.glyph)?;
                    let top = top_of(classifier, &merged)?;
                    out.add_combined(node, to, merged)?;
                    tops.push(top);
                }
            }
        }
    }
    Ok(out)
}
