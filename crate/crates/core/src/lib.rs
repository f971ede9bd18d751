//! Printed-glyph OCR: page segmentation, a convolutional glyph classifier
//! trained from scratch, and trigram/Viterbi decoding over segmentation
//! graphs with recovery of broken glyphs.
//!
//! The crate also ships a parametric synthetic alphabet and language so the
//! whole pipeline can be trained and evaluated without external data.

pub mod decoder;
pub mod distortion;
pub mod error;
pub mod langmodel;
pub mod net;
pub mod raster;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
