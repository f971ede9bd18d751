//! Netpbm support: PBM (P1/P4) for bilevel pages and glyphs, PGM (P2/P5)
//! for 8-bit debug renders.
//!
//! Writers emit the canonical header `Pn\n<w> <h>\n[255\n]` so that
//! `write(read(x)) == x` for any file this module produced.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{BinaryImage, GrayImage};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pnm {
    Bitmap(BinaryImage),
    Gray(GrayImage),
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("expected a number in PNM header".into()));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Format("number out of range in PNM header".into()))
    }

    /// Consumes the single whitespace byte that ends a binary header.
    fn end_of_header(&mut self) -> Result<()> {
        match self.data.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::Format("missing whitespace after PNM header".into())),
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.data[self.pos..]
    }
}

pub fn decode(data: &[u8]) -> Result<Pnm> {
    if data.len() < 2 || data[0] != b'P' {
        return Err(Error::Format("not a PNM file".into()));
    }
    let kind = data[1];
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number()?;
    let height = cur.number()?;
    match kind {
        b'1' => {
            let mut bits = Vec::with_capacity(width * height);
            while bits.len() < width * height {
                cur.skip_space_and_comments();
                match cur.data.get(cur.pos) {
                    Some(b'0') => bits.push(0),
                    Some(b'1') => bits.push(1),
                    Some(_) => return Err(Error::Format("bad P1 pixel".into())),
                    None => return Err(Error::Format("truncated P1 data".into())),
                }
                cur.pos += 1;
            }
            Ok(Pnm::Bitmap(BinaryImage::from_bits(width, height, bits)?))
        }
        b'4' => {
            cur.end_of_header()?;
            let stride = width.div_ceil(8);
            let raw = cur.rest();
            if raw.len() < stride * height {
                return Err(Error::Format("truncated P4 data".into()));
            }
            let mut img = BinaryImage::new(width, height);
            for y in 0..height {
                let row = &raw[y * stride..(y + 1) * stride];
                for x in 0..width {
                    if row[x / 8] & (0x80 >> (x % 8)) != 0 {
                        img.set(x, y, true);
                    }
                }
            }
            Ok(Pnm::Bitmap(img))
        }
        b'2' | b'5' => {
            let maxval = cur.number()?;
            if maxval == 0 || maxval > 255 {
                return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
            }
            let scale = |v: usize| -> u8 { ((v.min(maxval) * 255 + maxval / 2) / maxval) as u8 };
            let data = if kind == b'2' {
                let mut out = Vec::with_capacity(width * height);
                for _ in 0..width * height {
                    out.push(scale(cur.number()?));
                }
                out
            } else {
                cur.end_of_header()?;
                let raw = cur.rest();
                if raw.len() < width * height {
                    return Err(Error::Format("truncated P5 data".into()));
                }
                raw[..width * height].iter().map(|&v| scale(v as usize)).collect()
            };
            Ok(Pnm::Gray(GrayImage {
                width,
                height,
                data,
            }))
        }
        _ => Err(Error::Format(format!("unsupported PNM kind P{}", kind as char))),
    }
}

pub fn encode_pbm_raw(img: &BinaryImage) -> Vec<u8> {
    let mut out = format!("P4\n{} {}\n", img.width(), img.height()).into_bytes();
    let stride = img.width().div_ceil(8);
    for y in 0..img.height() {
        let mut row = vec![0u8; stride];
        for (x, &b) in img.row(y).iter().enumerate() {
            if b != 0 {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

/// Plain PBM with at most 70 characters per line.
pub fn encode_pbm_plain(img: &BinaryImage) -> Vec<u8> {
    let mut out = format!("P1\n{} {}\n", img.width(), img.height()).into_bytes();
    for y in 0..img.height() {
        for chunk in img.row(y).chunks(70) {
            out.extend(chunk.iter().map(|&b| b'0' + b));
            out.push(b'\n');
        }
    }
    out
}

pub fn encode_pgm_raw(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn encode_pgm_plain(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n255\n", img.width, img.height).into_bytes();
    for row in img.data.chunks(img.width.max(1)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        for piece in line.chunks(16) {
            writeln!(out, "{}", piece.join(" ")).unwrap();
        }
    }
    out
}

pub fn read_pbm(path: impl AsRef<Path>) -> Result<BinaryImage> {
    let path = path.as_ref();
    match decode(&fs::read(path)?)? {
        Pnm::Bitmap(img) => Ok(img),
        Pnm::Gray(_) => Err(Error::Format(format!("{}: expected a PBM bitmap", path.display()))),
    }
}

pub fn write_pbm(path: impl AsRef<Path>, img: &BinaryImage) -> Result<()> {
    fs::write(path, encode_pbm_raw(img))?;
    Ok(())
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm_raw(img))?;
    Ok(())
}
