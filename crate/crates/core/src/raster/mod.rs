//! Binary and gray image containers plus the handful of geometric
//! primitives the rest of the pipeline needs.

mod components;
pub mod pnm;

pub use components::{connected_components, Component, Connectivity};

use crate::error::{Error, Result};

/// Bilevel image, row-major, `1` is ink.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl std::fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("ink", &self.ink_count())
            .finish()
    }
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryImage {
            width,
            height,
            bits: vec![0; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} bits for a {}x{} image",
                bits.len(),
                width,
                height
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidImage("bit value outside {0,1}".into()));
        }
        Ok(BinaryImage {
            width,
            height,
            bits,
        })
    }

    /// Builds an image from rows of `'#'` (ink) and any other character.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut img = BinaryImage::new(width, height);
        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.chars().enumerate() {
                if c == '#' {
                    img.set(x, y, true);
                }
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.bits[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x] != 0
    }

    /// Like [`get`](Self::get) but returns background outside the canvas.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ink: bool) {
        self.bits[y * self.width + x] = ink as u8;
    }

    /// Sets a pixel if it lies on the canvas.
    #[inline]
    pub fn set_signed(&mut self, x: i64, y: i64, ink: bool) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.set(x as usize, y as usize, ink);
        }
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn is_blank(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Tight bounding box of the ink, `None` for a blank image.
    pub fn ink_bbox(&self) -> Option<BoundingBox> {
        let mut bbox: Option<BoundingBox> = None;
        for y in 0..self.height {
            for (x, &b) in self.row(y).iter().enumerate() {
                if b != 0 {
                    let b = bbox.get_or_insert(BoundingBox::new(x, y, x + 1, y + 1));
                    b.include(x, y);
                }
            }
        }
        bbox
    }

    /// Copies the region `bbox` (clipped to the canvas) into a new image.
    pub fn crop(&self, bbox: &BoundingBox) -> BinaryImage {
        let x1 = bbox.x1.min(self.width);
        let y1 = bbox.y1.min(self.height);
        let w = x1.saturating_sub(bbox.x0);
        let h = y1.saturating_sub(bbox.y0);
        let mut out = BinaryImage::new(w, h);
        for y in 0..h {
            let src = &self.row(bbox.y0 + y)[bbox.x0..bbox.x0 + w];
            out.bits[y * w..(y + 1) * w].copy_from_slice(src);
        }
        out
    }

    /// ORs `other` onto this image with its top-left corner at `(x, y)`.
    pub fn blit_or(&mut self, other: &BinaryImage, x: i64, y: i64) {
        for sy in 0..other.height {
            for sx in 0..other.width {
                if other.get(sx, sy) {
                    self.set_signed(x + sx as i64, y + sy as i64, true);
                }
            }
        }
    }

    /// Pixel-wise inversion.
    pub fn inverted(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }

    /// Number of pixels that differ between two same-sized images.
    pub fn hamming(&self, other: &BinaryImage) -> usize {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.bits.iter().map(|&b| if b != 0 { 0 } else { 255 }).collect(),
        }
    }
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        debug_assert!(x0 < x1 && y0 < y1, "degenerate box");
        BoundingBox { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Grows the box to include pixel `(x, y)`.
    pub fn include(&mut self, x: usize, y: usize) {
        self.x0 = self.x0.min(x);
        self.y0 = self.y0.min(y);
        self.x1 = self.x1.max(x + 1);
        self.y1 = self.y1.max(y + 1);
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Length of the overlap of the two horizontal extents, 0 if disjoint.
    pub fn horizontal_overlap(&self, other: &BoundingBox) -> usize {
        self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0))
    }
}

/// 8-bit gray image, row-major, 0 is black.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        if x < self.width && y < self.height {
            self.data[y * self.width + x] = v;
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Copies `other` with its top-left corner at `(x, y)`, clipping.
    pub fn paste(&mut self, other: &GrayImage, x: usize, y: usize) {
        for sy in 0..other.height {
            for sx in 0..other.width {
                self.set(x + sx, y + sy, other.get(sx, sy));
            }
        }
    }
}

/// Count of ink pixels in each row.
pub fn row_ink_marginal(img: &BinaryImage) -> Vec<usize> {
    (0..img.height())
        .map(|y| img.row(y).iter().map(|&b| b as usize).sum())
        .collect()
}

/// Nearest-neighbour rotation about the image centre by `angle` degrees,
/// counter-clockwise as displayed. The canvas grows to hold every source
/// pixel and keeps the source's width/height parity so that the centre
/// pixel of an odd-sized image stays a pixel centre.
pub fn rotate_binary(img: &BinaryImage, angle: f64) -> Result<BinaryImage> {
    if !(-45.0..=45.0).contains(&angle) || !angle.is_finite() {
        return Err(Error::AngleOutOfRange(angle));
    }
    if angle == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let (sin, cos) = angle.to_radians().sin_cos();
    let fit = |extent: f64, parity: usize| {
        let mut n = (extent - 1e-9).ceil().max(1.0) as usize;
        if n % 2 != parity % 2 {
            n += 1;
        }
        n
    };
    let out_w = fit(w as f64 * cos.abs() + h as f64 * sin.abs(), w);
    let out_h = fit(w as f64 * sin.abs() + h as f64 * cos.abs(), h);
    let mut out = BinaryImage::new(out_w, out_h);
    if img.is_blank() {
        return Ok(out);
    }
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (ocx, ocy) = (out_w as f64 / 2.0, out_h as f64 / 2.0);
    for oy in 0..out_h {
        let dy = oy as f64 + 0.5 - ocy;
        for ox in 0..out_w {
            let dx = ox as f64 + 0.5 - ocx;
            // inverse of x' = x cos + y sin, y' = -x sin + y cos
            let sx = dx * cos - dy * sin + cx;
            let sy = dx * sin + dy * cos + cy;
            if sx >= 0.0 && sy >= 0.0 {
                let (ix, iy) = (sx.floor() as usize, sy.floor() as usize);
                if ix < w && iy < h && img.get(ix, iy) {
                    out.set(ox, oy, true);
                }
            }
        }
    }
    Ok(out)
}

/// Scales a crop so its longer side becomes `side`, preserving aspect ratio,
/// and centres it on a `side`×`side` background canvas.
pub fn scale_to_square(crop: &BinaryImage, side: usize) -> Result<BinaryImage> {
    let (w, h) = (crop.width(), crop.height());
    if w == 0 || h == 0 || crop.is_blank() {
        return Err(Error::Empty("glyph crop"));
    }
    if side == 0 {
        return Err(Error::InvalidParameter("side must be positive".into()));
    }
    if w == side && h == side {
        return Ok(crop.clone());
    }
    let long = w.max(h) as f64;
    let scale = side as f64 / long;
    let scaled_w = if w >= h {
        side
    } else {
        ((w as f64 * scale).round() as usize).clamp(1, side)
    };
    let scaled_h = if h >= w {
        side
    } else {
        ((h as f64 * scale).round() as usize).clamp(1, side)
    };
    let off_x = (side - scaled_w) / 2;
    let off_y = (side - scaled_h) / 2;
    let mut out = BinaryImage::new(side, side);
    for y in 0..scaled_h {
        let sy = (((y as f64 + 0.5) * h as f64 / scaled_h as f64) as usize).min(h - 1);
        for x in 0..scaled_w {
            let sx = (((x as f64 + 0.5) * w as f64 / scaled_w as f64) as usize).min(w - 1);
            if crop.get(sx, sy) {
                out.set(off_x + x, off_y + y, true);
            }
        }
    }
    if out.is_blank() {
        // Sampling skipped every ink pixel; keep the first one.
        let idx = crop.bits().iter().position(|&b| b != 0).unwrap();
        let (sx, sy) = (idx % w, idx / w);
        let x = (sx * scaled_w / w).min(scaled_w - 1);
        let y = (sy * scaled_h / h).min(scaled_h - 1);
        out.set(off_x + x, off_y + y, true);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, density: f64, seed: u64) -> BinaryImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits = (0..w * h).map(|_| rng.gen_bool(density) as u8).collect();
        BinaryImage::from_bits(w, h, bits).unwrap()
    }

    /// Union of random filled disks, the "blob" test image.
    fn blob_image(side: usize, seed: u64) -> BinaryImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = BinaryImage::new(side, side);
        for _ in 0..12 {
            let cx = rng.gen_range(40.0..side as f64 - 40.0);
            let cy = rng.gen_range(40.0..side as f64 - 40.0);
            let r: f64 = rng.gen_range(8.0..25.0);
            for y in 0..side {
                for x in 0..side {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        img.set(x, y, true);
                    }
                }
            }
        }
        img
    }

    #[test]
    fn from_bits_rejects_bad_input() {
        assert!(BinaryImage::from_bits(2, 2, vec![0, 1, 0]).is_err());
        assert!(BinaryImage::from_bits(2, 1, vec![0, 2]).is_err());
    }

    #[test]
    fn marginal_examples() {
        let full = BinaryImage::from_bits(3, 2, vec![1; 6]).unwrap();
        assert_eq!(row_ink_marginal(&full), vec![3, 3]);
        assert_eq!(row_ink_marginal(&BinaryImage::new(5, 4)), vec![0; 4]);
        let mut one = BinaryImage::new(3, 4);
        one.set(2, 1, true);
        assert_eq!(row_ink_marginal(&one), vec![0, 1, 0, 0]);
    }

    #[test]
    fn rotate_zero_is_identity() {
        let img = random_image(31, 17, 0.3, 1);
        assert_eq!(rotate_binary(&img, 0.0).unwrap(), img);
    }

    #[test]
    fn rotate_rejects_large_angles() {
        let img = BinaryImage::new(4, 4);
        assert!(matches!(rotate_binary(&img, 45.5), Err(Error::AngleOutOfRange(_))));
        assert!(rotate_binary(&img, -45.0).is_ok());
    }

    #[test]
    fn rotate_centre_pixel_is_fixed() {
        let mut img = BinaryImage::new(21, 21);
        img.set(10, 10, true);
        for angle in [-30.0, -7.5, 3.0, 12.25, 44.0] {
            let r = rotate_binary(&img, angle).unwrap();
            assert_eq!(r.ink_count(), 1, "angle {angle}");
            let (cx, cy) = (r.width() / 2, r.height() / 2);
            assert!(r.get(cx, cy), "angle {angle}");
        }
    }

    #[test]
    fn rotate_round_trip_keeps_ink() {
        // Regression bound: measured loss for these blobs is well under 1%.
        let img = blob_image(200, 7);
        let base = img.ink_count() as f64;
        for angle in [2.0, 5.0, 17.0, 33.0] {
            let there = rotate_binary(&img, angle).unwrap();
            let back = rotate_binary(&there, -angle).unwrap();
            let ratio = back.ink_count() as f64 / base;
            assert!((ratio - 1.0).abs() < 0.02, "angle {angle}: ratio {ratio}");
        }
    }

    #[test]
    fn scale_identity_at_full_side() {
        let img = random_image(48, 48, 0.2, 3);
        assert_eq!(scale_to_square(&img, 48).unwrap(), img);
    }

    #[test]
    fn scale_preserves_aspect() {
        let rect = BinaryImage::from_bits(24, 12, vec![1; 24 * 12]).unwrap();
        let out = scale_to_square(&rect, 48).unwrap();
        let bbox = out.ink_bbox().unwrap();
        assert_eq!(bbox, BoundingBox::new(0, 12, 48, 36));
        assert_eq!(out.ink_count(), 48 * 24);
    }

    #[test]
    fn scale_down_wide_crop_occupies_middle_band() {
        // 96x48 maps with factor 1/2 to 48x24, rows 12..36.
        let img = random_image(96, 48, 0.5, 11);
        let mut framed = img.clone();
        for x in 0..96 {
            framed.set(x, 0, true);
            framed.set(x, 47, true);
        }
        let out = scale_to_square(&framed, 48).unwrap();
        let bbox = out.ink_bbox().unwrap();
        assert_eq!((bbox.y0, bbox.y1), (48 / 4, 3 * 48 / 4));
        assert_eq!((bbox.x0, bbox.x1), (0, 48));
    }

    #[test]
    fn scale_rejects_empty() {
        assert!(scale_to_square(&BinaryImage::new(0, 0), 48).is_err());
        assert!(scale_to_square(&BinaryImage::new(5, 5), 48).is_err());
    }

    #[test]
    fn scale_keeps_sparse_ink() {
        let mut img = BinaryImage::new(400, 3);
        img.set(201, 1, true);
        let out = scale_to_square(&img, 48).unwrap();
        assert!(out.ink_count() >= 1);
    }

    #[test]
    fn crop_and_bbox() {
        let img = BinaryImage::from_ascii(&["....", ".##.", "..#.", "...."]);
        let bbox = img.ink_bbox().unwrap();
        assert_eq!(bbox, BoundingBox::new(1, 1, 3, 3));
        let c = img.crop(&bbox);
        assert_eq!(c, BinaryImage::from_ascii(&["##", ".#"]));
    }

    proptest! {
        #[test]
        fn marginal_sums_to_ink(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
            let img = random_image(w, h, 0.35, seed);
            let total: usize = row_ink_marginal(&img).iter().sum();
            prop_assert_eq!(total, img.ink_count());
        }

        #[test]
        fn scale_is_idempotent_on_outputs(w in 1usize..70, h in 1usize..70, seed in any::<u64>()) {
            let img = random_image(w, h, 0.4, seed);
            prop_assume!(!img.is_blank());
            let once = scale_to_square(&img, 48).unwrap();
            let twice = scale_to_square(&once, 48).unwrap();
            prop_assert_eq!(once.width(), 48);
            prop_assert_eq!(once.height(), 48);
            prop_assert!(once.ink_count() >= 1);
            prop_assert_eq!(twice, once);
        }
    }
}
