//! Random input distortions for training: translation, rotation, zoom,
//! elastic deformation and salt & pepper noise.
//!
//! The geometric steps compose into a single backward map, so a distorted
//! glyph is resampled (nearest neighbour) only once.

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::BinaryImage;

#[derive(Clone, Debug, PartialEq)]
pub struct DistortionParams {
    /// Maximum shift along each axis, in pixels.
    pub max_translate: f64,
    /// Maximum rotation either way, in degrees.
    pub max_rotate: f64,
    pub zoom_range: (f64, f64),
    pub elastic_sigma: f64,
    pub elastic_alpha: f64,
    pub saltpepper_p: f64,
    pub seed: u64,
}

impl Default for DistortionParams {
    fn default() -> Self {
        DistortionParams {
            max_translate: 3.0,
            max_rotate: 5.0,
            zoom_range: (0.9, 1.1),
            elastic_sigma: 4.0,
            elastic_alpha: 8.0,
            saltpepper_p: 0.01,
            seed: 0,
        }
    }
}

impl DistortionParams {
    /// All amounts zero: `distort` is the identity.
    pub fn none() -> Self {
        DistortionParams {
            max_translate: 0.0,
            max_rotate: 0.0,
            zoom_range: (1.0, 1.0),
            elastic_sigma: 4.0,
            elastic_alpha: 0.0,
            saltpepper_p: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.zoom_range;
        let ok = self.max_translate >= 0.0
            && self.max_rotate >= 0.0
            && lo > 0.0
            && lo <= 1.0
            && hi >= 1.0
            && self.elastic_sigma > 0.0
            && self.elastic_alpha >= 0.0
            && (0.0..0.5).contains(&self.saltpepper_p);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid distortion parameters {self:?}")))
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with edge clamping.
fn blur(field: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + t as i64 - r).clamp(0, w as i64 - 1) as usize;
                s += kv * field[y * w + sx];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, kv) in kernel.iter().enumerate() {
                let sy = (y as i64 + t as i64 - r).clamp(0, h as i64 - 1) as usize;
                s += kv * tmp[sy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Displacements `(dx, dy)` per pixel: uniform(−1, 1) noise blurred with
/// a Gaussian of width `sigma`, then scaled by `alpha`.
fn elastic_field<R: Rng>(w: usize, h: usize, sigma: f64, alpha: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let kernel = gaussian_kernel(sigma);
    let mut noise = || -> Vec<f64> { (0..w * h).map(|_| rng.gen_range(-1.0..=1.0)).collect() };
    let (nx, ny) = (noise(), noise());
    let scale = |v: Vec<f64>| v.into_iter().map(|d| d * alpha).collect::<Vec<_>>();
    (scale(blur(&nx, w, h, &kernel)), scale(blur(&ny, w, h, &kernel)))
}

fn sample(img: &BinaryImage, sx: f64, sy: f64) -> bool {
    let (x, y) = (sx.round(), sy.round());
    x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() && img.get(x as usize, y as usize)
}

pub fn elastic_deform<R: Rng>(img: &BinaryImage, sigma: f64, alpha: f64, rng: &mut R) -> Result<BinaryImage> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("elastic sigma {sigma} must be positive")));
    }
    if alpha == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let (dx, dy) = elastic_field(w, h, sigma, alpha, rng);
    let mut out = BinaryImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            out.set(x, y, sample(img, x as f64 + dx[i], y as f64 + dy[i]));
        }
    }
    Ok(out)
}

/// Flips every pixel independently with probability `p`.
pub fn salt_pepper<R: Rng>(img: &BinaryImage, p: f64, rng: &mut R) -> Result<BinaryImage> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::InvalidParameter(format!("salt & pepper rate {p} outside [0, 0.5)")));
    }
    let mut out = img.clone();
    if p == 0.0 {
        return Ok(out);
    }
    for y in 0..img.height() {
        for x in 0..img.width() {
            if rng.gen_bool(p) {
                out.set(x, y, !img.get(x, y));
            }
        }
    }
    Ok(out)
}

/// Draws each amount uniformly within `params` and applies, in order,
/// translation, rotation and zoom about the centre, the elastic field, and
/// salt & pepper noise. Ink pushed off the frame is lost.
pub fn distort<R: Rng>(img: &BinaryImage, params: &DistortionParams, rng: &mut R) -> Result<BinaryImage> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let uniform = |rng: &mut R, a: f64| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
    let tx = uniform(rng, params.max_translate);
    let ty = uniform(rng, params.max_translate);
    let theta = uniform(rng, params.max_rotate).to_radians();
    let (lo, hi) = params.zoom_range;
    let zoom = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let field = if params.elastic_alpha > 0.0 {
        Some(elastic_field(w, h, params.elastic_sigma, params.elastic_alpha, rng))
    } else {
        None
    };
    let geometric = tx != 0.0 || ty != 0.0 || theta != 0.0 || zoom != 1.0 || field.is_some();
    let mut out = if geometric {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (s, c) = theta.sin_cos();
        let mut out = BinaryImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                // backward map: undo elastic, zoom, rotation, translation
                let (mut px, mut py) = (x as f64, y as f64);
                if let Some((dx, dy)) = &field {
                    px += dx[y * w + x];
                    py += dy[y * w + x];
                }
                let (zx, zy) = ((px - cx) / zoom, (py - cy) / zoom);
                let (rx, ry) = (c * zx + s * zy, -s * zx + c * zy);
                out.set(x, y, sample(img, rx + cx - tx, ry + cy - ty));
            }
        }
        out
    } else {
        img.clone()
    };
    if params.saltpepper_p > 0.0 {
        out = salt_pepper(&out, params.saltpepper_p, rng)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::scale_to_square;
    use crate::synth::AlphabetSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn glyph(class: usize, seed: u64) -> BinaryImage {
        let alpha = AlphabetSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = alpha.render_random(class, &mut rng).unwrap();
        scale_to_square(&r.image, 48).unwrap()
    }

    #[test]
    fn zero_parameters_are_identity() {
        let g = glyph(3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(distort(&g, &DistortionParams::none(), &mut rng).unwrap(), g);
        assert_eq!(elastic_deform(&g, 4.0, 0.0, &mut rng).unwrap(), g);
        assert_eq!(salt_pepper(&g, 0.0, &mut rng).unwrap(), g);
    }

    #[test]
    fn seeded_and_varied() {
        let g = glyph(0, 3);
        let p = DistortionParams::default();
        let a = distort(&g, &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = distort(&g, &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let c = distort(&g, &p, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!((a.width(), a.height()), (48, 48));
    }

    #[test]
    fn pure_translation_moves_ink() {
        let mut g = BinaryImage::new(48, 48);
        g.set(20, 20, true);
        let p = DistortionParams {
            max_translate: 3.0,
            ..DistortionParams::none()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = distort(&g, &p, &mut rng).unwrap();
        let b = out.ink_bbox().expect("pixel kept");
        assert!((b.x0 as i64 - 20).abs() <= 3 && (b.y0 as i64 - 20).abs() <= 3);
    }

    #[test]
    fn elastic_keeps_ink_mass() {
        let mut worst: f64 = 0.0;
        let mut total = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..1000 {
            let g = glyph(i % 16, i as u64);
            let d = elastic_deform(&g, 4.0, 8.0, &mut rng).unwrap();
            let change = (d.ink_count() as f64 - g.ink_count() as f64).abs() / g.ink_count() as f64;
            worst = worst.max(change);
            total += change;
        }
        assert!(total / 1000.0 < 0.05, "mean change {}", total / 1000.0);
        assert!(worst < 0.15, "worst change {worst}");
    }

    #[test]
    fn flip_rate_is_binomial() {
        let g = BinaryImage::new(48, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n: f64 = 48.0 * 48.0;
        let p = 0.02;
        let sigma = (n * p * (1.0 - p)).sqrt();
        for _ in 0..20 {
            let flipped = salt_pepper(&g, p, &mut rng).unwrap().ink_count() as f64;
            assert!((flipped - n * p).abs() <= 3.0 * sigma, "flipped {flipped}");
        }
        let g = glyph(2, 7);
        let once = salt_pepper(&g, 0.1, &mut rng).unwrap();
        let twice = salt_pepper(&once, 0.1, &mut rng).unwrap();
        assert_ne!(twice, g);
    }

    #[test]
    fn invalid_parameters() {
        let g = glyph(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(salt_pepper(&g, 0.5, &mut rng).is_err());
        assert!(elastic_deform(&g, 0.0, 1.0, &mut rng).is_err());
        let bad = DistortionParams {
            zoom_range: (1.1, 1.2),
            ..DistortionParams::default()
        };
        assert!(distort(&g, &bad, &mut rng).is_err());
    }
}
