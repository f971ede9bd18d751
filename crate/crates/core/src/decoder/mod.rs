//! Line decoding: segmentation graphs, heuristic over-segmentation,
//! top-M recognition graphs and Viterbi search under the n-gram model.

mod graph;
mod overseg;
mod search;

pub use graph::{
    build_seg_graph, edge_posteriors, recognize, top_candidates, Candidate, EdgeOrigin, RecEdge, RecognitionGraph,
    RecognizeParams, SegEdge, SegmentationGraph,
};
pub use overseg::{combine_score, oversegment, pair_features, CombineRuleWeights, MAX_SURPRISE};
pub use search::{best_ngram_path, brute_force_decode, ngram_graph, viterbi, Decoded, NgramArc, BRUTE_FORCE_BUDGET};

use rayon::prelude::*;

use crate::error::Result;
use crate::langmodel::{ClassPrior, TrigramTable};
use crate::net::GlyphClassifier;
use crate::segmentation::GlyphExtract;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeParams {
    pub m: usize,
    pub lambda: f64,
    pub combine: CombineRuleWeights,
    /// Use the language model and over-segmentation; otherwise take the
    /// best label of every glyph after case-control correction.
    pub use_lm: bool,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            m: 5,
            lambda: 1.0,
            combine: CombineRuleWeights::default(),
            use_lm: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineDecode {
    pub labels: Vec<usize>,
    pub seg: SegmentationGraph,
    pub rec: RecognitionGraph,
}

pub fn decode_line(
    glyphs: Vec<GlyphExtract>,
    classifier: &dyn GlyphClassifier,
    lm: &TrigramTable,
    params: &DecodeParams,
) -> Result<LineDecode> {
    let linear = build_seg_graph(glyphs);
    if !params.use_lm {
        // the balanced training prior would otherwise cancel against the
        // n-gram term, so correction belongs to this mode only
        let rp = RecognizeParams {
            m: params.m,
            lambda: params.lambda,
            prior: Some(ClassPrior::from_table(lm)),
        };
        let rec = recognize(&linear, classifier, &rp)?;
        let labels = rec.edges.iter().map(|e| e.candidates[0].label).collect();
        return Ok(LineDecode { labels, seg: linear, rec });
    }
    let seg = oversegment(&linear, classifier, Some(lm), &params.combine)?;
    let rp = RecognizeParams {
        m: params.m,
        lambda: params.lambda,
        prior: None,
    };
    let rec = recognize(&seg, classifier, &rp)?;
    let labels = viterbi(&rec, lm)?.labels;
    Ok(LineDecode { labels, seg, rec })
}

/// Decodes lines independently; results keep the input order.
pub fn decode_lines(
    lines: Vec<Vec<GlyphExtract>>,
    classifier: &dyn GlyphClassifier,
    lm: &TrigramTable,
    params: &DecodeParams,
) -> Result<Vec<LineDecode>> {
    lines
        .into_par_iter()
        .map(|g| decode_line(g, classifier, lm, params))
        .collect()
}
