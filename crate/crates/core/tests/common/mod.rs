#![allow(dead_code)]

use glyphocr::decoder::{Candidate, EdgeOrigin, RecEdge, RecognitionGraph};
use glyphocr::langmodel::TrigramTable;
use glyphocr::net::GlyphClassifier;
use glyphocr::raster::{BinaryImage, BoundingBox};
use glyphocr::segmentation::{GlyphExtract, LineBand};
use glyphocr::Result;
use rand::seq::SliceRandom;
use rand::Rng;

pub const BAND: LineBand = LineBand {
    sep_top: 0,
    top_line: 0,
    base_line: 30,
    sep_bottom: 40,
};

/// Solid glyph covering `[x0, x1) × [y0, y1)`.
pub fn solid(x0: usize, x1: usize, y0: usize, y1: usize, pitch: f64) -> GlyphExtract {
    let mut crop = BinaryImage::new(x1 - x0, y1 - y0);
    for y in 0..y1 - y0 {
        for x in 0..x1 - x0 {
            crop.set(x, y, true);
        }
    }
    GlyphExtract::new(crop, BoundingBox::new(x0, y0, x1, y1), BAND, 0, pitch, 0).unwrap()
}

/// Returns the row of `table` selected by the glyph's top row, which the
/// tests use as a glyph id (pitch 1, top line 0).
pub struct RowClassifier {
    pub table: Vec<Vec<f64>>,
}

impl GlyphClassifier for RowClassifier {
    fn num_classes(&self) -> usize {
        self.table[0].len()
    }

    fn classify(&self, _image: &BinaryImage, location: [f64; 2]) -> Result<Vec<f64>> {
        Ok(self.table[location[0].round() as usize].clone())
    }
}

/// Same posterior for every glyph.
pub struct ConstClassifier(pub Vec<f64>);

impl GlyphClassifier for ConstClassifier {
    fn num_classes(&self) -> usize {
        self.0.len()
    }

    fn classify(&self, _image: &BinaryImage, _location: [f64; 2]) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

pub fn random_candidates<R: Rng>(rng: &mut R, k: usize, m: usize) -> Vec<Candidate> {
    let mut labels: Vec<usize> = (0..k).collect();
    labels.shuffle(rng);
    let mut c: Vec<Candidate> = labels[..m]
        .iter()
        .map(|&label| Candidate {
            label,
            p: rng.gen_range(0.01..1.0),
        })
        .collect();
    c.sort_by(|a, b| b.p.total_cmp(&a.p));
    c
}

/// Linear backbone plus random extra forward edges, at most `max_edges`
/// in total.
pub fn random_graph<R: Rng>(rng: &mut R, k: usize, max_m: usize, max_edges: usize) -> RecognitionGraph {
    let backbone = rng.gen_range(1..=max_edges.min(6));
    let num_nodes = backbone + 1;
    let mut pairs: Vec<(usize, usize)> = (0..backbone).map(|i| (i, i + 1)).collect();
    let extra = rng.gen_range(0..=max_edges - backbone);
    for _ in 0..extra {
        if num_nodes < 3 {
            break;
        }
        let a = rng.gen_range(0..num_nodes - 2);
        let b = rng.gen_range(a + 2..num_nodes);
        if !pairs.contains(&(a, b)) {
            pairs.push((a, b));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(from, to)| {
            let m = rng.gen_range(1..=max_m);
            RecEdge {
                from,
                to,
                origin: if to == from + 1 { EdgeOrigin::Original } else { EdgeOrigin::Combined },
                candidates: random_candidates(rng, k, m),
            }
        })
        .collect();
    RecognitionGraph::new(num_nodes, edges).unwrap()
}

pub fn random_lm<R: Rng>(rng: &mut R, k: usize) -> TrigramTable {
    let sentences = rng.gen_range(1..30);
    let corpus: Vec<Vec<usize>> = (0..sentences)
        .map(|_| (0..rng.gen_range(1..10)).map(|_| rng.gen_range(0..k)).collect())
        .collect();
    glyphocr::langmodel::train_ngram(&corpus, k).unwrap()
}
