//! Synthetic stand-ins for font rendering and text corpora: a stroke
//! alphabet with style jitter, a ground-truth glyph language, page
//! composition with ground truth and erasure injection, and balanced
//! training sets.

pub mod alphabet;
pub mod dataset;
pub mod language;
pub mod page;

pub use alphabet::{AlphabetSpec, GlyphProgram, RenderedGlyph, Stroke, Style, StyleRanges};
pub use dataset::{gen_training_set, Dataset};
pub use language::{gen_corpus, LanguageSpec};
pub use page::{gen_page, Erasure, GlyphTruth, Layout, LineTruth, PageTruth};
