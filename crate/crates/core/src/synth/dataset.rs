//! Balanced labelled glyph sets rendered from an alphabet.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::alphabet::AlphabetSpec;
use crate::error::{Error, Result};
use crate::net::Sample;
use crate::raster::{pnm, scale_to_square};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .map(|s| s.label + 1)
            .max()
            .unwrap_or(0)
    }

    /// Writes `labels.tsv` plus one PBM per sample under `train/`,
    /// `valid/` and `test/`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut labels = String::from("file\tclass\ttop_offset\tbase_offset\n");
        for (name, part) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            fs::create_dir_all(dir.join(name))?;
            for (i, s) in part.iter().enumerate() {
                let file = format!("{name}/{i:05}.pbm");
                pnm::write_pbm(dir.join(&file), &s.image)?;
                labels.push_str(&format!(
                    "{file}\t{}\t{}\t{}\n",
                    s.label, s.location[0], s.location[1]
                ));
            }
        }
        let mut f = fs::File::create(dir.join("labels.tsv"))?;
        f.write_all(labels.as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(dir.join("labels.tsv"))?;
        let mut out = Dataset::default();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("labels.tsv line {}", n + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad());
            }
            let sample = Sample {
                image: pnm::read_pbm(dir.join(cols[0]))?,
                label: cols[1].parse().map_err(|_| bad())?,
                location: [
                    cols[2].parse().map_err(|_| bad())?,
                    cols[3].parse().map_err(|_| bad())?,
                ],
            };
            match cols[0].split('/').next() {
                Some("train") => out.train.push(sample),
                Some("valid") => out.valid.push(sample),
                Some("test") => out.test.push(sample),
                _ => return Err(bad()),
            }
        }
        Ok(out)
    }
}

/// Renders `styles_per_class` samples of every class and splits them
/// 80/10/10 after a seeded shuffle.
///
/// Location features are measured against a canonical band whose top line
/// is the glyph body's top row and whose base line is its bottom row,
/// normalized by `pitch`.
pub fn gen_training_set(
    alphabet: &AlphabetSpec,
    styles_per_class: usize,
    pitch: usize,
    seed: u64,
) -> Result<Dataset> {
    if styles_per_class == 0 {
        return Err(Error::InvalidParameter("styles_per_class must be positive".into()));
    }
    let pitch_f = pitch as f64;
    let base_line = alphabet.body_height as f64 - 1.0;
    let mut samples = Vec::with_capacity(styles_per_class * alphabet.num_classes());
    for class in 0..alphabet.num_classes() {
        for style in 0..styles_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ ((class as u64) << 32 | style as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let r = alphabet.render_random(class, &mut rng)?;
            let bottom = r.top as f64 + r.image.height() as f64 - 1.0;
            samples.push(Sample {
                image: scale_to_square(&r.image, 48)?,
                location: [r.top as f64 / pitch_f, (bottom - base_line) / pitch_f],
                label: class,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    samples.shuffle(&mut rng);
    let n = samples.len();
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let test = samples.split_off(n_train + n_valid);
    let valid = samples.split_off(n_train);
    Ok(Dataset {
        train: samples,
        valid,
        test,
    })
}
