//! Parametric stroke alphabet and its rasterizer.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{scale_to_square, BinaryImage};

/// One pen stroke on the unit square, `y` pointing down.
#[derive(Clone, Debug, PartialEq)]
pub enum Stroke {
    Polyline(Vec<(f64, f64)>),
    /// Elliptic arc `c + (rx cos t, ry sin t)` for `t` in `[t0, t1]` (radians).
    Arc {
        center: (f64, f64),
        radius: (f64, f64),
        t0: f64,
        t1: f64,
    },
}

impl Stroke {
    fn line(points: &[(f64, f64)]) -> Stroke {
        Stroke::Polyline(points.to_vec())
    }

    fn arc(cx: f64, cy: f64, r: f64, t0_deg: f64, t1_deg: f64) -> Stroke {
        Stroke::Arc {
            center: (cx, cy),
            radius: (r, r),
            t0: t0_deg.to_radians(),
            t1: t1_deg.to_radians(),
        }
    }

    fn points(&self) -> Vec<(f64, f64)> {
        match self {
            Stroke::Polyline(p) => p.clone(),
            Stroke::Arc {
                center,
                radius,
                t0,
                t1,
            } => {
                let steps = (((t1 - t0).abs() / (3.0f64).to_radians()).ceil() as usize).max(2);
                (0..=steps)
                    .map(|i| {
                        let t = t0 + (t1 - t0) * i as f64 / steps as f64;
                        (center.0 + radius.0 * t.cos(), center.1 + radius.1 * t.sin())
                    })
                    .collect()
            }
        }
    }
}

/// The drawing recipe of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphProgram {
    pub name: String,
    pub strokes: Vec<Stroke>,
    /// Vertical shift of the whole glyph in body heights; positive values
    /// push it below the baseline.
    pub drop: f64,
    /// Class whose shape this one reuses at a different vertical position.
    pub twin_of: Option<usize>,
}

/// Jitter ranges from which per-sample styles are drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleRanges {
    pub stroke_radius: (f64, f64),
    pub slant: (f64, f64),
    pub scale_x: (f64, f64),
    pub scale_y: (f64, f64),
    pub wobble: (f64, f64),
}

impl Default for StyleRanges {
    fn default() -> Self {
        StyleRanges {
            stroke_radius: (1.0, 2.2),
            slant: (-0.2, 0.2),
            scale_x: (0.8, 1.15),
            scale_y: (0.88, 1.08),
            wobble: (0.0, 0.05),
        }
    }
}

/// One concrete rendering style, the synthetic stand-in for a font.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Style {
    pub stroke_radius: f64,
    pub slant: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    /// Amplitude of a smooth displacement field, in unit-square coordinates.
    pub wobble: f64,
    pub wobble_seed: u64,
}

impl Style {
    pub fn canonical() -> Style {
        Style {
            stroke_radius: 1.5,
            slant: 0.0,
            scale_x: 1.0,
            scale_y: 1.0,
            wobble: 0.0,
            wobble_seed: 0,
        }
    }

    pub fn sample<R: Rng>(ranges: &StyleRanges, rng: &mut R) -> Style {
        let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        Style {
            stroke_radius: draw(ranges.stroke_radius),
            slant: draw(ranges.slant),
            scale_x: draw(ranges.scale_x),
            scale_y: draw(ranges.scale_y),
            wobble: draw(ranges.wobble),
            wobble_seed: rng.gen(),
        }
    }
}

/// A rendered glyph: tight ink crop plus the crop's offset from the body
/// origin (left edge, top line). The body spans rows `0..body_height`.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedGlyph {
    pub image: BinaryImage,
    pub left: i64,
    pub top: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphabetSpec {
    pub glyphs: Vec<GlyphProgram>,
    pub styles: StyleRanges,
    pub styles_per_class: usize,
    /// Distance from top line to base line, in pixels.
    pub body_height: usize,
}

impl AlphabetSpec {
    /// Fourteen hand-drawn shapes plus two below-baseline twins.
    pub fn standard() -> AlphabetSpec {
        let mut glyphs = base_shapes();
        add_twin(&mut glyphs, 4, "v_low");
        add_twin(&mut glyphs, 7, "c_low");
        AlphabetSpec {
            glyphs,
            styles: StyleRanges::default(),
            styles_per_class: 160,
            body_height: 26,
        }
    }

    /// 64 classes: the base shapes, procedurally generated grid polylines,
    /// and four below-baseline twins.
    pub fn large() -> AlphabetSpec {
        let mut glyphs = base_shapes();
        let mut rng = ChaCha8Rng::seed_from_u64(0x6c61_7267_65);
        let style = Style::canonical();
        let mut canon: Vec<BinaryImage> = glyphs
            .iter()
            .map(|g| canonical_square(g, &style, 26))
            .collect();
        while glyphs.len() < 60 {
            let g = random_grid_program(&mut rng, glyphs.len());
            let img = canonical_square(&g, &style, 26);
            let distinct = canon
                .iter()
                .all(|c| c.hamming(&img) as f64 >= 0.05 * (48.0 * 48.0));
            if distinct {
                canon.push(img);
                glyphs.push(g);
            }
        }
        for (src, name) in [(4, "v_low"), (7, "c_low"), (14, "p14_low"), (20, "p20_low")] {
            add_twin(&mut glyphs, src, name);
        }
        AlphabetSpec {
            glyphs,
            styles: StyleRanges::default(),
            styles_per_class: 160,
            body_height: 26,
        }
    }

    pub fn by_name(preset: &str) -> Result<AlphabetSpec> {
        match preset {
            "standard" | "16" => Ok(AlphabetSpec::standard()),
            "large" | "64" => Ok(AlphabetSpec::large()),
            other => Err(Error::InvalidParameter(format!("unknown alphabet preset {other:?}"))),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.glyphs.len()
    }

    /// Pairs `(base, twin)` that share a shape and differ only in position.
    pub fn twin_pairs(&self) -> Vec<(usize, usize)> {
        self.glyphs
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.twin_of.map(|b| (b, i)))
            .collect()
    }

    /// Rasterizes `class` in `style`. Deterministic in `(class, style)`.
    pub fn render(&self, class: usize, style: &Style) -> Result<RenderedGlyph> {
        let program = self.glyphs.get(class).ok_or_else(|| {
            Error::InvalidParameter(format!("class {class} outside alphabet of {}", self.glyphs.len()))
        })?;
        Ok(render_program(program, style, self.body_height))
    }

    /// Draws a style from the alphabet's ranges and renders `class` with it.
    pub fn render_random<R: Rng>(&self, class: usize, rng: &mut R) -> Result<RenderedGlyph> {
        let style = Style::sample(&self.styles, rng);
        self.render(class, &style)
    }
}

fn add_twin(glyphs: &mut Vec<GlyphProgram>, base: usize, name: &str) {
    let mut g = glyphs[base].clone();
    g.name = name.to_string();
    g.drop = 0.45;
    g.twin_of = Some(base);
    glyphs.push(g);
}

fn program(name: &str, strokes: Vec<Stroke>) -> GlyphProgram {
    GlyphProgram {
        name: name.to_string(),
        strokes,
        drop: 0.0,
        twin_of: None,
    }
}

fn base_shapes() -> Vec<GlyphProgram> {
    let wave: Vec<(f64, f64)> = (0..=24)
        .map(|i| {
            let x = i as f64 / 24.0;
            (x, 0.5 - 0.42 * (2.0 * PI * x).sin())
        })
        .collect();
    vec![
        program("o", vec![Stroke::arc(0.5, 0.5, 0.5, 0.0, 360.0)]),
        program("l", vec![Stroke::line(&[(0.15, 0.0), (0.15, 1.0), (0.85, 1.0)])]),
        program(
            "t",
            vec![
                Stroke::line(&[(0.0, 0.0), (1.0, 0.0)]),
                Stroke::line(&[(0.5, 0.0), (0.5, 1.0)]),
            ],
        ),
        program(
            "x",
            vec![
                Stroke::line(&[(0.0, 0.0), (1.0, 1.0)]),
                Stroke::line(&[(1.0, 0.0), (0.0, 1.0)]),
            ],
        ),
        program("v", vec![Stroke::line(&[(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)])]),
        program(
            "z",
            vec![Stroke::line(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])],
        ),
        program(
            "u",
            vec![
                Stroke::line(&[(0.0, 0.0), (0.0, 0.5)]),
                Stroke::arc(0.5, 0.5, 0.5, 180.0, 0.0),
                Stroke::line(&[(1.0, 0.5), (1.0, 0.0)]),
            ],
        ),
        program("c", vec![Stroke::arc(0.5, 0.5, 0.5, 45.0, 315.0)]),
        program(
            "n",
            vec![
                Stroke::line(&[(0.0, 1.0), (0.0, 0.5)]),
                Stroke::arc(0.5, 0.5, 0.5, 180.0, 360.0),
                Stroke::line(&[(1.0, 0.5), (1.0, 1.0)]),
            ],
        ),
        program(
            "delta",
            vec![Stroke::line(&[(0.5, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.0)])],
        ),
        program(
            "e",
            vec![
                Stroke::line(&[(1.0, 0.0), (0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]),
                Stroke::line(&[(0.0, 0.5), (0.75, 0.5)]),
            ],
        ),
        program("s", vec![Stroke::Polyline(wave)]),
        program(
            "box",
            vec![Stroke::line(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)])],
        ),
        program(
            "plus",
            vec![
                Stroke::line(&[(0.5, 0.0), (0.5, 1.0)]),
                Stroke::line(&[(0.0, 0.5), (1.0, 0.5)]),
            ],
        ),
    ]
}

/// A connected walk over a 3×3 grid of anchor points, with an optional
/// branch from one of its vertices.
fn random_grid_program<R: Rng>(rng: &mut R, index: usize) -> GlyphProgram {
    let anchor = |i: usize| ((i % 3) as f64 * 0.5, (i / 3) as f64 * 0.5);
    let len = rng.gen_range(3..6);
    let mut walk = vec![rng.gen_range(0..9)];
    while walk.len() < len {
        let next = rng.gen_range(0..9);
        if next != *walk.last().unwrap() && !walk.contains(&next) {
            walk.push(next);
        }
    }
    let mut strokes = vec![Stroke::Polyline(walk.iter().map(|&i| anchor(i)).collect())];
    if rng.gen_bool(0.5) {
        let from = walk[rng.gen_range(0..walk.len())];
        let to = (0..9).filter(|i| !walk.contains(i)).nth(rng.gen_range(0..(9 - walk.len())));
        if let Some(to) = to {
            strokes.push(Stroke::Polyline(vec![anchor(from), anchor(to)]));
        }
    }
    program(&format!("p{index}"), strokes)
}

fn canonical_square(g: &GlyphProgram, style: &Style, body: usize) -> BinaryImage {
    let r = render_program(g, style, body);
    scale_to_square(&r.image, 48).expect("rendered glyphs are nonempty")
}

/// Smooth displacement used for per-style wobble; being a function of
/// position keeps shared stroke endpoints together.
fn wobble_field(seed: u64, amp: f64) -> impl Fn(f64, f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = [0.0f64; 8];
    for c in coeffs.iter_mut() {
        *c = rng.gen_range(0.0..1.0);
    }
    move |x, y| {
        let fx = 2.0 + 3.0 * coeffs[0];
        let fy = 2.0 + 3.0 * coeffs[1];
        let dx = amp * (fx * x + (1.0 + coeffs[2]) * y + 2.0 * PI * coeffs[3]).sin();
        let dy = amp * ((1.0 + coeffs[4]) * x + fy * y + 2.0 * PI * coeffs[5]).sin();
        (dx, dy)
    }
}

fn render_program(g: &GlyphProgram, style: &Style, body: usize) -> RenderedGlyph {
    let h = (body - 1) as f64;
    let w = 0.85 * h;
    let field = wobble_field(style.wobble_seed, style.wobble);
    // whole pixels, so twins rasterize identically
    let shift = (g.drop * h).round();
    let r = style.stroke_radius.max(0.5);
    // centrelines inset by the pen radius so un-dropped ink spans rows 0..body
    let (pad, span) = (r, (h - 2.0 * r).max(1.0));
    let map = |(x, y): (f64, f64)| -> (f64, f64) {
        let (dx, dy) = if style.wobble > 0.0 { field(x, y) } else { (0.0, 0.0) };
        let (x, y) = (x + dx, y + dy);
        // anchored at the baseline so that scale_y moves the top only
        let y = 1.0 - (1.0 - y) * style.scale_y;
        let x = x * style.scale_x + style.slant * (1.0 - y);
        (x * w, pad + y * span + shift)
    };
    let mut centre: Vec<(i64, i64)> = Vec::new();
    for stroke in &g.strokes {
        let pts: Vec<(f64, f64)> = stroke.points().into_iter().map(map).collect();
        for seg in pts.windows(2) {
            bresenham(
                (seg[0].0.round() as i64, seg[0].1.round() as i64),
                (seg[1].0.round() as i64, seg[1].1.round() as i64),
                &mut centre,
            );
        }
        if pts.len() == 1 {
            centre.push((pts[0].0.round() as i64, pts[0].1.round() as i64));
        }
    }
    let reach = r.ceil() as i64;
    let min_x = centre.iter().map(|p| p.0).min().unwrap() - reach;
    let min_y = centre.iter().map(|p| p.1).min().unwrap() - reach;
    let max_x = centre.iter().map(|p| p.0).max().unwrap() + reach;
    let max_y = centre.iter().map(|p| p.1).max().unwrap() + reach;
    let mut canvas =
        BinaryImage::new((max_x - min_x + 1) as usize, (max_y - min_y + 1) as usize);
    let r2 = r * r;
    for &(cx, cy) in &centre {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if (dx * dx + dy * dy) as f64 <= r2 {
                    canvas.set_signed(cx + dx - min_x, cy + dy - min_y, true);
                }
            }
        }
    }
    let bbox = canvas.ink_bbox().expect("stamped strokes leave ink");
    RenderedGlyph {
        image: canvas.crop(&bbox),
        left: min_x + bbox.x0 as i64,
        top: min_y + bbox.y0 as i64,
    }
}

fn bresenham(a: (i64, i64), b: (i64, i64), out: &mut Vec<(i64, i64)>) {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        out.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}
