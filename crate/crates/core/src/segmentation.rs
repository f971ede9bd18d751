//! Page segmentation from the row-ink marginal: skew correction, line
//! pitch from the dominant Fourier harmonic, base/top line detection, and
//! glyph extraction by connected components.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::raster::{
    connected_components, rotate_binary, row_ink_marginal, scale_to_square, BinaryImage,
    BoundingBox, Component, Connectivity,
};

/// Side of the standardized glyph image fed to the classifier.
pub const GLYPH_SIDE: usize = 48;

/// Components smaller than this are discarded as salt noise.
pub const NOISE_FLOOR: usize = 3;

/// Minimum spacing between baselines, as a fraction of the pitch.
const BASELINE_SUPPRESSION: f64 = 0.6;

/// Threshold of [`occupancy`] relative to the busiest row.
const OCCUPIED_FRACTION: f64 = 0.05;

/// A top-line rise must reach this fraction of the band's strongest rise.
const TOPLINE_FRACTION: f64 = 0.5;

/// Drops weaker than this fraction of the strongest one are not baselines.
const MIN_DROP_FRACTION: f64 = 0.15;

/// One text line. Rows `sep_top..sep_bottom` belong to the line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LineBand {
    pub sep_top: usize,
    pub top_line: usize,
    pub base_line: usize,
    pub sep_bottom: usize,
}

impl LineBand {
    fn distance(&self, row: f64) -> f64 {
        if row < self.sep_top as f64 {
            self.sep_top as f64 - row
        } else if row >= self.sep_bottom as f64 {
            row - self.sep_bottom as f64 + 1.0
        } else {
            0.0
        }
    }
}

/// A standardized glyph ready for classification.
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphExtract {
    /// `GLYPH_SIDE`×`GLYPH_SIDE` aspect-preserving rescale of `crop`.
    pub image: BinaryImage,
    /// The glyph's own ink on a canvas the size of `bbox`.
    pub crop: BinaryImage,
    pub bbox: BoundingBox,
    /// `(bbox top - top line) / pitch`.
    pub top_offset: f64,
    /// `(last ink row - base line) / pitch`; positive below the baseline.
    pub base_offset: f64,
    /// Reading index within the line.
    pub order: usize,
    pub band: usize,
    pub line: LineBand,
    pub pitch: f64,
}

impl GlyphExtract {
    pub fn new(
        crop: BinaryImage,
        bbox: BoundingBox,
        line: LineBand,
        band: usize,
        pitch: f64,
        order: usize,
    ) -> Result<GlyphExtract> {
        if pitch <= 0.0 {
            return Err(Error::InvalidParameter("pitch must be positive".into()));
        }
        Ok(GlyphExtract {
            image: scale_to_square(&crop, GLYPH_SIDE)?,
            top_offset: (bbox.y0 as f64 - line.top_line as f64) / pitch,
            base_offset: ((bbox.y1 - 1) as f64 - line.base_line as f64) / pitch,
            crop,
            bbox,
            order,
            band,
            line,
            pitch,
        })
    }

    pub fn location(&self) -> [f64; 2] {
        [self.top_offset, self.base_offset]
    }

    pub fn ink(&self) -> usize {
        self.crop.ink_count()
    }

    /// The union of two glyphs' ink, re-standardized.
    pub fn merge(&self, other: &GlyphExtract) -> Result<GlyphExtract> {
        let bbox = self.bbox.union(&other.bbox);
        let mut crop = BinaryImage::new(bbox.width(), bbox.height());
        for g in [self, other] {
            crop.blit_or(
                &g.crop,
                (g.bbox.x0 - bbox.x0) as i64,
                (g.bbox.y0 - bbox.y0) as i64,
            );
        }
        GlyphExtract::new(crop, bbox, self.line, self.band, self.pitch, self.order)
    }
}

/// Variance of the first difference of `m` zero-padded to `len` entries.
fn diff_variance(m: &[usize], len: usize) -> f64 {
    let n = len.max(m.len()) + 1;
    let at = |i: usize| if i < m.len() { m[i] as f64 } else { 0.0 };
    let (mut sum, mut sq) = (0.0, 0.0);
    // leading zero row so that the first rise counts as well
    let mut prev = 0.0;
    for i in 0..n {
        let d = at(i) - prev;
        sum += d;
        sq += d * d;
        prev = at(i);
    }
    let mean = sum / n as f64;
    sq / n as f64 - mean * mean
}

/// Grid search for the skew angle that maximizes the variance of the
/// first difference of the row-ink marginal.
///
/// Returns the estimated skew `angle` (the page looks rotated
/// counter-clockwise by it) and the page rotated back by `-angle`.
/// Marginals are compared after zero-padding to a common length, since the
/// rotated canvas grows with the angle.
pub fn deskew(img: &BinaryImage, range: f64, step: f64) -> Result<(f64, BinaryImage)> {
    if !(0.0..=10.0).contains(&range) || step <= 0.0 || !step.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "deskew range {range} / step {step}"
        )));
    }
    if img.is_blank() {
        return Ok((0.0, img.clone()));
    }
    let n_steps = (range / step + 1e-9).floor() as i64;
    let mut candidates = Vec::with_capacity(2 * n_steps as usize + 1);
    for i in -n_steps..=n_steps {
        let angle = i as f64 * step;
        let rotated = rotate_binary(img, -angle)?;
        candidates.push((angle, row_ink_marginal(&rotated)));
    }
    let common = candidates.iter().map(|(_, m)| m.len()).max().unwrap();
    let mut best = (0.0f64, f64::NEG_INFINITY);
    for (angle, m) in &candidates {
        let score = diff_variance(m, common);
        let better = score > best.1 || (score == best.1 && angle.abs() < best.0.abs());
        if better {
            best = (*angle, score);
        }
    }
    let corrected = rotate_binary(img, -best.0)?;
    Ok((best.0, corrected))
}

/// Magnitudes `|X[k]|`, `k = 0..=n/2`, of the mean-centred marginal.
pub fn marginal_spectrum(marginal: &[usize]) -> Vec<f64> {
    let n = marginal.len();
    let mean = marginal.iter().sum::<usize>() as f64 / n.max(1) as f64;
    let centred: Vec<f64> = marginal.iter().map(|&v| v as f64 - mean).collect();
    (0..=n / 2)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / n as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in centred.iter().enumerate() {
                let (s, c) = (w * t as f64).sin_cos();
                re += v * c;
                im -= v * s;
            }
            re.hypot(im)
        })
        .collect()
}

/// Rows holding at least a small fraction of the busiest row's ink, as 0/1,
/// cropped to the inked extent. Short and long lines weigh the same here
/// and the page margins are gone, so the line rhythm dominates the
/// spectrum even on pages with few lines of unequal length.
pub fn occupancy(marginal: &[usize]) -> Vec<usize> {
    let max = marginal.iter().copied().max().unwrap_or(0);
    let t = (OCCUPIED_FRACTION * max as f64).max(1.0);
    let occ: Vec<usize> = marginal.iter().map(|&v| (v as f64 >= t) as usize).collect();
    match (occ.iter().position(|&v| v > 0), occ.iter().rposition(|&v| v > 0)) {
        (Some(first), Some(last)) => occ[first..=last].to_vec(),
        _ => Vec::new(),
    }
}

/// Distance between baselines, from the strongest harmonic of the
/// mean-centred marginal: `pitch = len / k*`.
pub fn estimate_line_pitch(marginal: &[usize]) -> Result<f64> {
    let n = marginal.len();
    if n < 8 {
        return Err(Error::InvalidParameter(format!(
            "marginal of {n} rows is too short for a pitch estimate"
        )));
    }
    let mag = marginal_spectrum(marginal);
    let mut k_star = 1;
    for k in 2..mag.len() {
        if mag[k] > mag[k_star] {
            k_star = k;
        }
    }
    let scale = marginal.iter().copied().max().unwrap_or(0) as f64;
    if mag[k_star] <= 1e-9 * scale.max(1.0) * n as f64 {
        return Err(Error::NoPeriodicStructure);
    }
    Ok(n as f64 / k_star as f64)
}

fn smooth(marginal: &[usize], width: usize) -> Vec<f64> {
    let n = marginal.len();
    let half = width / 2;
    (0..n)
        .map(|r| {
            let lo = r.saturating_sub(half);
            let hi = (lo + width).min(n);
            marginal[lo..hi].iter().sum::<usize>() as f64 / width as f64
        })
        .collect()
}

/// Baselines at the sharpest drops of the smoothed marginal, line
/// separations at the emptiest row between baselines, top lines at the
/// first strong rise above each baseline.
pub fn detect_lines(marginal: &[usize], pitch: f64) -> Result<Vec<LineBand>> {
    if !(pitch >= 4.0) {
        return Err(Error::InvalidParameter(format!("pitch {pitch} below 4 rows")));
    }
    let n = marginal.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let width = ((pitch / 8.0).round() as usize).max(3);
    let s = smooth(marginal, width);
    // drop[r] = s[r] - s[r+1]
    let drop: Vec<f64> = s.windows(2).map(|w| w[0] - w[1]).collect();
    let strongest = drop.iter().cloned().fold(0.0, f64::max);
    if strongest <= 0.0 {
        return Ok(Vec::new());
    }
    // local maxima; a flat top counts once, at its middle row
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    let mut r = 0;
    while r < drop.len() {
        let mut end = r;
        while end + 1 < drop.len() && drop[end + 1] == drop[r] {
            end += 1;
        }
        let d = drop[r];
        let left = r == 0 || drop[r - 1] < d;
        let right = end + 1 == drop.len() || drop[end + 1] < d;
        if d > 0.0 && d >= MIN_DROP_FRACTION * strongest && left && right {
            peaks.push(((r + end) / 2, d));
        }
        r = end + 1;
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let min_gap = BASELINE_SUPPRESSION * pitch;
    let mut bases: Vec<usize> = Vec::new();
    for (r, _) in peaks {
        if bases.iter().all(|&b| (b as f64 - r as f64).abs() >= min_gap) {
            bases.push(r);
        }
    }
    bases.sort_unstable();

    // separations between consecutive baselines: middle of the minimal rows
    let mut seps = Vec::with_capacity(bases.len().saturating_sub(1));
    for w in bases.windows(2) {
        let range = w[0] + 1..w[1];
        let min = range.clone().map(|r| marginal[r]).min().unwrap_or(0);
        let rows: Vec<usize> = range.filter(|&r| marginal[r] == min).collect();
        seps.push(rows[rows.len() / 2]);
    }
    let gap_below = if seps.is_empty() {
        (0.4 * pitch).round() as usize
    } else {
        let mut g: Vec<usize> = seps.iter().zip(&bases).map(|(s, b)| s - b).collect();
        g.sort_unstable();
        g[g.len() / 2]
    };

    let rise: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    let mut bands = Vec::with_capacity(bases.len());
    for (i, &base) in bases.iter().enumerate() {
        let sep_top = if i == 0 {
            (base + gap_below).saturating_sub(pitch.round() as usize)
        } else {
            seps[i - 1]
        };
        let sep_bottom = if i + 1 == bases.len() {
            (base + gap_below + 1).min(n)
        } else {
            seps[i]
        };
        let sep_top = sep_top.min(base);
        let sep_bottom = sep_bottom.max(base + 1);
        // the uppermost rise comparable to the strongest one; heavy bottom
        // strokes otherwise pull the top line into the body
        let window = sep_top..base.saturating_sub(1).max(sep_top);
        let strongest_rise = window.clone().map(|r| rise[r]).fold(0.0, f64::max);
        let mut top_line = sep_top;
        for r in window {
            let local = (r == 0 || rise[r] >= rise[r - 1]) && rise[r] >= rise[r + 1];
            if rise[r] > 0.0 && rise[r] >= TOPLINE_FRACTION * strongest_rise && local {
                top_line = r + 1;
                break;
            }
        }
        if top_line >= base {
            top_line = sep_top.min(base.saturating_sub(1));
        }
        bands.push(LineBand {
            sep_top,
            top_line,
            base_line: base,
            sep_bottom,
        });
    }
    Ok(bands)
}

/// Output of [`extract_glyphs`].
#[derive(Clone, Debug, Default)]
pub struct Extraction {
    /// Glyphs per band, in reading order.
    pub lines: Vec<Vec<GlyphExtract>>,
    /// Components below the noise floor.
    pub discarded: Vec<Component>,
}

impl Extraction {
    pub fn glyph_count(&self) -> usize {
        self.lines.iter().map(Vec::len).sum()
    }
}

/// Connected components of the page, each assigned to the band holding its
/// ink-centroid row (or the nearest band) and ordered left to right, then
/// top to bottom.
pub fn extract_glyphs(
    img: &BinaryImage,
    bands: &[LineBand],
    pitch: f64,
    connectivity: Connectivity,
) -> Result<Extraction> {
    let mut out = Extraction {
        lines: vec![Vec::new(); bands.len()],
        discarded: Vec::new(),
    };
    if bands.is_empty() {
        return Ok(out);
    }
    let mut per_band: Vec<Vec<Component>> = vec![Vec::new(); bands.len()];
    for comp in connected_components(img, connectivity) {
        if comp.len() < NOISE_FLOOR {
            out.discarded.push(comp);
            continue;
        }
        let row = comp.centroid_row();
        let band = (0..bands.len())
            .min_by(|&a, &b| bands[a].distance(row).total_cmp(&bands[b].distance(row)))
            .unwrap();
        per_band[band].push(comp);
    }
    for (bi, mut comps) in per_band.into_iter().enumerate() {
        comps.sort_by_key(|c| (c.bbox.x0, c.bbox.y0, c.id));
        for (order, c) in comps.into_iter().enumerate() {
            out.lines[bi].push(GlyphExtract::new(c.to_image(), c.bbox, bands[bi], bi, pitch, order)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentParams {
    pub skew_range: f64,
    pub skew_step: f64,
    pub connectivity: Connectivity,
    /// Pitch assumed when the page has too few lines to estimate one.
    pub nominal_pitch: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            skew_range: 5.0,
            skew_step: 0.25,
            connectivity: Connectivity::Eight,
            nominal_pitch: 52.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PageSegmentation {
    pub skew: f64,
    pub corrected: BinaryImage,
    pub marginal: Vec<usize>,
    /// Fourier estimate from the line occupancy (or the nominal pitch),
    /// replaced by the median baseline spacing when there are two or more
    /// lines.
    pub pitch: f64,
    pub bands: Vec<LineBand>,
    pub extraction: Extraction,
}

/// Deskew, find lines and extract glyphs. A blank page yields no lines.
pub fn segment_page(img: &BinaryImage, params: &SegmentParams) -> Result<PageSegmentation> {
    let (skew, corrected) = deskew(img, params.skew_range, params.skew_step)?;
    let marginal = row_ink_marginal(&corrected);
    let mut seg = PageSegmentation {
        skew,
        corrected,
        marginal,
        pitch: 0.0,
        bands: Vec::new(),
        extraction: Extraction::default(),
    };
    if seg.marginal.iter().all(|&v| v == 0) {
        return Ok(seg);
    }
    // a single period over the inked extent means fewer than three lines,
    // too few to measure the rhythm
    let occ = occupancy(&seg.marginal);
    let pitch = match estimate_line_pitch(&occ) {
        Ok(p) if p < occ.len() as f64 => p,
        Ok(_) | Err(Error::NoPeriodicStructure) | Err(Error::InvalidParameter(_)) => {
            params.nominal_pitch
        }
        Err(e) => return Err(e),
    };
    seg.bands = detect_lines(&seg.marginal, pitch.max(4.0))?;
    seg.pitch = if seg.bands.len() >= 2 {
        let mut gaps: Vec<usize> = seg
            .bands
            .windows(2)
            .map(|w| w[1].base_line - w[0].base_line)
            .collect();
        gaps.sort_unstable();
        gaps[gaps.len() / 2] as f64
    } else {
        pitch
    };
    seg.extraction = extract_glyphs(&seg.corrected, &seg.bands, seg.pitch, params.connectivity)?;
    Ok(seg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_page, AlphabetSpec, Layout, LanguageSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn page(lines: usize, skew: f64, seed: u64) -> (BinaryImage, crate::synth::PageTruth) {
        let alpha = AlphabetSpec::standard();
        let lang = LanguageSpec::generate(16, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text: Vec<Vec<usize>> = (0..lines).map(|_| lang.sample_sentence(&mut rng)).collect();
        gen_page(&text, &alpha, &Layout::default(), skew, 0.0, &mut rng).unwrap()
    }

    fn cosine(period: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n).map(|t| amp * (2.0 * PI * t as f64 / period).cos()).collect()
    }

    fn quantize(v: &[f64]) -> Vec<usize> {
        v.iter().map(|x| (x + 100.0).round() as usize).collect()
    }

    #[test]
    fn pitch_of_pure_cosine() {
        let m = quantize(&cosine(60.0, 10.0, 600));
        assert_eq!(estimate_line_pitch(&m).unwrap(), 60.0);
    }

    #[test]
    fn dominant_harmonic_wins() {
        let a = cosine(60.0, 10.0, 600);
        let b = cosine(30.0, 3.0, 600);
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        assert_eq!(estimate_line_pitch(&quantize(&m)).unwrap(), 60.0);
    }

    #[test]
    fn constant_marginal_has_no_pitch() {
        assert!(matches!(
            estimate_line_pitch(&[7; 64]),
            Err(Error::NoPeriodicStructure)
        ));
        assert!(estimate_line_pitch(&[1, 2, 3]).is_err());
    }

    #[test]
    fn pitch_of_eight_line_page() {
        let (img, _) = page(8, 0.0, 1);
        let p = estimate_line_pitch(&row_ink_marginal(&img)).unwrap();
        assert!((47.0..=57.0).contains(&p), "pitch {p}");
    }

    #[test]
    fn blank_inputs() {
        let blank = BinaryImage::new(50, 40);
        let (angle, out) = deskew(&blank, 5.0, 0.25).unwrap();
        assert_eq!(angle, 0.0);
        assert_eq!(out, blank);
        assert!(detect_lines(&[0; 40], 20.0).unwrap().is_empty());
        let ex = extract_glyphs(&blank, &[], 20.0, Connectivity::Four).unwrap();
        assert_eq!(ex.glyph_count(), 0);
    }

    #[test]
    fn straight_page_is_not_rotated() {
        let (img, _) = page(4, 0.0, 2);
        let (angle, _) = deskew(&img, 5.0, 0.25).unwrap();
        assert!(angle.abs() <= 0.25, "angle {angle}");
    }

    #[test]
    fn injected_skew_is_recovered() {
        let (img, _) = page(5, 2.0, 3);
        let (angle, _) = deskew(&img, 5.0, 0.25).unwrap();
        assert!((angle - 2.0).abs() <= 0.25, "angle {angle}");
    }

    #[test]
    fn lines_match_ground_truth() {
        for (n, seed) in [(3, 4), (1, 5), (6, 6)] {
            let (img, truth) = page(n, 0.0, seed);
            let seg = segment_page(&img, &SegmentParams::default()).unwrap();
            assert_eq!(seg.bands.len(), n, "seed {seed}");
            for (band, line) in seg.bands.iter().zip(&truth.lines) {
                let db = band.base_line as i64 - line.base_line as i64;
                assert!(db.abs() <= 2, "base line off by {db}");
                assert!(band.sep_top <= band.top_line && band.top_line < band.base_line);
                assert!(band.base_line < band.sep_bottom);
            }
            for w in seg.bands.windows(2) {
                assert!(w[0].sep_bottom <= w[1].sep_top);
            }
        }
    }

    #[test]
    fn reading_order_and_labels() {
        let (img, truth) = page(4, 0.0, 8);
        let seg = segment_page(&img, &SegmentParams::default()).unwrap();
        assert_eq!(seg.extraction.lines.len(), truth.lines.len());
        for (glyphs, line) in seg.extraction.lines.iter().zip(&truth.lines) {
            assert_eq!(glyphs.len(), line.glyphs.len());
            for (g, t) in glyphs.iter().zip(&line.glyphs) {
                assert_eq!(g.bbox, t.bbox);
            }
        }
    }

    #[test]
    fn seven_glyphs_left_to_right() {
        let alpha = AlphabetSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let text = vec![vec![3, 1, 4, 1, 5, 9, 2]];
        let (img, truth) = gen_page(&text, &alpha, &Layout::default(), 0.0, 0.0, &mut rng).unwrap();
        let seg = segment_page(&img, &SegmentParams::default()).unwrap();
        assert_eq!(seg.extraction.lines.len(), 1);
        let xs: Vec<usize> = seg.extraction.lines[0].iter().map(|g| g.bbox.x0).collect();
        let want: Vec<usize> = truth.lines[0].glyphs.iter().map(|g| g.bbox.x0).collect();
        assert_eq!(xs, want);
    }

    #[test]
    fn descender_has_positive_base_offset() {
        let alpha = AlphabetSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let text = vec![vec![0, 14, 2, 3, 15, 5], vec![6, 7, 8, 9, 10, 11]];
        let (img, _) = gen_page(&text, &alpha, &Layout::default(), 0.0, 0.0, &mut rng).unwrap();
        let seg = segment_page(&img, &SegmentParams::default()).unwrap();
        let line = &seg.extraction.lines[0];
        assert_eq!(line.len(), 6);
        assert!(line[1].base_offset > 0.15);
        assert!(line[4].base_offset > 0.15);
        assert!(line[0].base_offset.abs() < 0.1);
    }

    #[test]
    fn every_ink_pixel_is_accounted_for() {
        let (mut img, _) = page(3, 0.0, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (x, y) = (rng.gen_range(0..img.width()), rng.gen_range(0..img.height()));
            img.set(x, y, true);
        }
        let seg = segment_page(&img, &SegmentParams::default()).unwrap();
        let kept: usize = seg.extraction.lines.iter().flatten().map(|g| g.ink()).sum();
        let dropped: usize = seg.extraction.discarded.iter().map(|c| c.len()).sum();
        assert_eq!(kept + dropped, seg.corrected.ink_count());
        assert!(seg.extraction.discarded.iter().all(|c| c.len() < NOISE_FLOOR));
    }

    #[test]
    fn merge_unions_ink() {
        let band = LineBand {
            sep_top: 0,
            top_line: 2,
            base_line: 10,
            sep_bottom: 14,
        };
        let a = GlyphExtract::new(
            BinaryImage::from_ascii(&["##", "##"]),
            BoundingBox::new(3, 4, 5, 6),
            band,
            0,
            12.0,
            0,
        )
        .unwrap();
        let b = GlyphExtract::new(
            BinaryImage::from_ascii(&["#"]),
            BoundingBox::new(7, 9, 8, 10),
            band,
            0,
            12.0,
            1,
        )
        .unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.bbox, BoundingBox::new(3, 4, 8, 10));
        assert_eq!(m.ink(), 5);
        assert_eq!(m.base_offset, (9.0 - 10.0) / 12.0);
        assert_eq!(m.image.width(), GLYPH_SIDE);
    }
}
