//! Page composition with ground truth and ink-erasure injection.

use std::fmt::Write as _;

use rand::Rng;

use super::alphabet::AlphabetSpec;
use crate::error::{Error, Result};
use crate::raster::{connected_components, rotate_binary, BinaryImage, BoundingBox, Connectivity};

/// Pieces smaller than this do not count towards a successful split; the
/// segmenter drops them as noise.
const MIN_PIECE: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    /// Distance between consecutive base lines.
    pub pitch: usize,
    pub margin_x: usize,
    pub margin_y: usize,
    /// Inclusive range of blank columns between neighbouring glyphs.
    pub gap: (usize, usize),
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            pitch: 52,
            margin_x: 24,
            margin_y: 30,
            gap: (6, 11),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlyphTruth {
    pub class: usize,
    /// Ink box in unrotated page coordinates.
    pub bbox: BoundingBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineTruth {
    pub top_line: usize,
    pub base_line: usize,
    pub glyphs: Vec<GlyphTruth>,
}

impl LineTruth {
    pub fn text(&self) -> Vec<usize> {
        self.glyphs.iter().map(|g| g.class).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Erasure {
    pub line: usize,
    pub index: usize,
    /// First cleared page column.
    pub column: usize,
    pub width: usize,
    pub split: bool,
    /// Pieces of at least three pixels left after the cut.
    pub pieces: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageTruth {
    pub lines: Vec<LineTruth>,
    pub skew: f64,
    pub pitch: usize,
    pub erasures: Vec<Erasure>,
}

impl PageTruth {
    pub fn glyph_count(&self) -> usize {
        self.lines.iter().map(|l| l.glyphs.len()).sum()
    }

    pub fn broken_count(&self) -> usize {
        self.erasures.iter().filter(|e| e.split).count()
    }

    pub fn text(&self) -> Vec<Vec<usize>> {
        self.lines.iter().map(LineTruth::text).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# glyphocr page truth v1\n");
        writeln!(out, "skew {}", self.skew).unwrap();
        writeln!(out, "pitch {}", self.pitch).unwrap();
        for line in &self.lines {
            writeln!(out, "line {} {} {}", line.top_line, line.base_line, line.glyphs.len()).unwrap();
            for g in &line.glyphs {
                let b = g.bbox;
                writeln!(out, "g {} {} {} {} {}", g.class, b.x0, b.y0, b.x1, b.y1).unwrap();
            }
        }
        for e in &self.erasures {
            writeln!(
                out,
                "erasure {} {} {} {} {} {}",
                e.line, e.index, e.column, e.width, e.split as u8, e.pieces
            )
            .unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<PageTruth> {
        let bad = |n: usize, msg: &str| Error::Format(format!("truth line {}: {msg}", n + 1));
        let mut truth = PageTruth {
            lines: Vec::new(),
            skew: 0.0,
            pitch: 0,
            erasures: Vec::new(),
        };
        for (n, raw) in text.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut parts = raw.split_whitespace();
            let tag = parts.next().unwrap();
            let nums: Vec<&str> = parts.collect();
            let int = |i: usize| -> Result<usize> {
                nums.get(i)
                    .ok_or_else(|| bad(n, "missing field"))?
                    .parse()
                    .map_err(|_| bad(n, "bad integer"))
            };
            match tag {
                "skew" => {
                    truth.skew = nums
                        .first()
                        .ok_or_else(|| bad(n, "missing skew"))?
                        .parse()
                        .map_err(|_| bad(n, "bad skew"))?
                }
                "pitch" => truth.pitch = int(0)?,
                "line" => truth.lines.push(LineTruth {
                    top_line: int(0)?,
                    base_line: int(1)?,
                    glyphs: Vec::with_capacity(int(2)?),
                }),
                "g" => {
                    let g = GlyphTruth {
                        class: int(0)?,
                        bbox: BoundingBox {
                            x0: int(1)?,
                            y0: int(2)?,
                            x1: int(3)?,
                            y1: int(4)?,
                        },
                    };
                    truth
                        .lines
                        .last_mut()
                        .ok_or_else(|| bad(n, "glyph before any line"))?
                        .glyphs
                        .push(g);
                }
                "erasure" => truth.erasures.push(Erasure {
                    line: int(0)?,
                    index: int(1)?,
                    column: int(2)?,
                    width: int(3)?,
                    split: int(4)? != 0,
                    pieces: int(5)?,
                }),
                other => return Err(bad(n, &format!("unknown record {other:?}"))),
            }
        }
        Ok(truth)
    }
}

/// Clears a 1-2 column vertical band through `glyph`, retrying up to ten
/// positions until it falls apart into at least two pieces.
fn erase<R: Rng>(glyph: &BinaryImage, rng: &mut R) -> Option<(BinaryImage, usize, usize, usize)> {
    let w = glyph.width();
    for _ in 0..10 {
        let band = rng.gen_range(1..=2usize);
        if w < band + 4 {
            return None;
        }
        let col = rng.gen_range(2..=w - band - 2);
        let mut cut = glyph.clone();
        for y in 0..cut.height() {
            for x in col..col + band {
                cut.set(x, y, false);
            }
        }
        let pieces = connected_components(&cut, Connectivity::Four)
            .iter()
            .filter(|c| c.len() >= MIN_PIECE)
            .count();
        if pieces >= 2 {
            return Some((cut, col, band, pieces));
        }
    }
    None
}

/// Renders `lines` of glyph ids onto a page, one random style per glyph.
///
/// Each glyph is cut by an erasure band with probability `erasure_rate`;
/// the page is finally rotated counter-clockwise by `skew` degrees.
pub fn gen_page<R: Rng>(
    lines: &[Vec<usize>],
    alphabet: &AlphabetSpec,
    layout: &Layout,
    skew: f64,
    erasure_rate: f64,
    rng: &mut R,
) -> Result<(BinaryImage, PageTruth)> {
    if !(0.0..=0.5).contains(&erasure_rate) {
        return Err(Error::InvalidParameter(format!(
            "erasure rate {erasure_rate} outside [0, 0.5]"
        )));
    }
    let body = alphabet.body_height as i64;
    let mut placed: Vec<(BinaryImage, i64, i64)> = Vec::new();
    let mut truth = PageTruth {
        lines: Vec::with_capacity(lines.len()),
        skew,
        pitch: layout.pitch,
        erasures: Vec::new(),
    };
    let mut page_w = 0i64;
    for (li, text) in lines.iter().enumerate() {
        let top_line = layout.margin_y as i64 + (li * layout.pitch) as i64;
        let mut pen = layout.margin_x as i64;
        let mut glyphs = Vec::with_capacity(text.len());
        for (gi, &class) in text.iter().enumerate() {
            let r = alphabet.render_random(class, rng)?;
            let (x, y) = (pen, top_line + r.top);
            let bbox = BoundingBox::new(
                x as usize,
                y as usize,
                (x + r.image.width() as i64) as usize,
                (y + r.image.height() as i64) as usize,
            );
            let mut image = r.image;
            if erasure_rate > 0.0 && rng.gen_bool(erasure_rate) {
                match erase(&image, rng) {
                    Some((cut, col, width, pieces)) => {
                        image = cut;
                        truth.erasures.push(Erasure {
                            line: li,
                            index: gi,
                            column: x as usize + col,
                            width,
                            split: true,
                            pieces,
                        });
                    }
                    None => truth.erasures.push(Erasure {
                        line: li,
                        index: gi,
                        column: x as usize,
                        width: 0,
                        split: false,
                        pieces: 1,
                    }),
                }
            }
            pen += image.width() as i64 + rng.gen_range(layout.gap.0..=layout.gap.1) as i64;
            placed.push((image, x, y));
            glyphs.push(GlyphTruth { class, bbox });
        }
        page_w = page_w.max(pen);
        truth.lines.push(LineTruth {
            top_line: top_line as usize,
            base_line: (top_line + body - 1) as usize,
            glyphs,
        });
    }
    let width = (page_w + layout.margin_x as i64) as usize;
    let height = layout.margin_y * 2 + lines.len().saturating_sub(1) * layout.pitch + body as usize;
    let mut page = BinaryImage::new(width, height);
    for (img, x, y) in &placed {
        page.blit_or(img, *x, *y);
    }
    if skew != 0.0 {
        page = rotate_binary(&page, skew)?;
    }
    Ok((page, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::language::LanguageSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_lines(n: usize, seed: u64) -> Vec<Vec<usize>> {
        let lang = LanguageSpec::generate(16, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| lang.sample_sentence(&mut rng)).collect()
    }

    fn big_components(img: &BinaryImage) -> usize {
        connected_components(img, Connectivity::Four)
            .iter()
            .filter(|c| c.len() >= MIN_PIECE)
            .count()
    }

    #[test]
    fn clean_page_has_one_component_per_glyph() {
        let alpha = AlphabetSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lines = sample_lines(5, 8);
        let (page, truth) = gen_page(&lines, &alpha, &Layout::default(), 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(truth.text(), lines);
        assert_eq!(big_components(&page), truth.glyph_count());
        assert!(truth.erasures.is_empty());
    }

    #[test]
    fn erasure_splits_the_expected_fraction() {
        let alpha = AlphabetSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lines: Vec<Vec<usize>> = (0..5).map(|i| (0..20).map(|j| (i * 20 + j) % 16).collect()).collect();
        let (page, truth) = gen_page(&lines, &alpha, &Layout::default(), 0.0, 0.25, &mut rng).unwrap();
        let split = truth.broken_count();
        // binomial(100, 0.25): sigma = 4.33
        assert!((25.0 - split as f64).abs() <= 3.0 * 4.33, "split {split}");
        let extra: usize = truth.erasures.iter().filter(|e| e.split).map(|e| e.pieces - 1).sum();
        assert_eq!(big_components(&page), truth.glyph_count() + extra);
    }

    #[test]
    fn skew_is_recorded_and_truth_round_trips() {
        let alpha = AlphabetSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (page, truth) =
            gen_page(&sample_lines(3, 1), &alpha, &Layout::default(), 2.0, 0.2, &mut rng).unwrap();
        assert_eq!(truth.skew, 2.0);
        assert!(!page.is_blank());
        assert_eq!(PageTruth::parse(&truth.to_text()).unwrap(), truth);
    }

    #[test]
    fn bad_erasure_rate_is_rejected() {
        let alpha = AlphabetSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(gen_page(&[vec![1]], &alpha, &Layout::default(), 0.0, 0.6, &mut rng).is_err());
    }
}
