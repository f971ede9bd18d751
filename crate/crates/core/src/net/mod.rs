//! Convolutional glyph classifier: layer kernels, architecture strings,
//! training with dropout, input distortion and an L∞ gradient bound, and
//! logit recalibration.

mod arch;
mod layers;
mod model;
mod train;

pub use arch::{alpha_for_layer, parse_architecture, Activation, LayerKind, LayerSpec, NetworkSpec, Shape};
pub use layers::{conv_forward, fc_forward, leaky_relu, leaky_relu_grad, maxpool_forward, softmax, ConvWeights, Dense, Tensor3};
pub use model::{
    recalibrate, standardize_locations, weight_init, ForwardCache, LayerParams, LocationStats, Mode, Network,
    NetworkParams,
};
pub use train::{
    confusion_matrix, error_rate, evaluate, nll_loss, sgd_step, train, train_from, EpochStats, TrainConfig, TrainReport,
};

use crate::error::Result;
use crate::raster::BinaryImage;

/// Probabilities below this are clamped before taking logs.
pub const NLL_FLOOR: f64 = 1e-30;

/// One labelled glyph: standardized image plus raw location features
/// `[top_offset, base_offset]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: BinaryImage,
    pub location: [f64; 2],
    pub label: usize,
}

/// Anything that maps a standardized glyph to class posteriors.
pub trait GlyphClassifier: Sync {
    fn num_classes(&self) -> usize;
    fn classify(&self, image: &BinaryImage, location: [f64; 2]) -> Result<Vec<f64>>;
}

impl GlyphClassifier for Network {
    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn classify(&self, image: &BinaryImage, location: [f64; 2]) -> Result<Vec<f64>> {
        self.predict(image, location)
    }
}
