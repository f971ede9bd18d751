//! Flat `key = value` configuration covering every tunable of the pipeline.
//!
//! Lines starting with `#` and blank lines are ignored. Unknown keys and
//! unparsable values are rejected, and the assembled parameter sets are
//! validated when a file is loaded.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use glyphocr::decoder::{CombineRuleWeights, DecodeParams};
use glyphocr::distortion::DistortionParams;
use glyphocr::net::{parse_architecture, Activation, NetworkSpec, TrainConfig};
use glyphocr::raster::Connectivity;
use glyphocr::segmentation::SegmentParams;
use glyphocr::synth::{AlphabetSpec, Layout};

use crate::UsageError;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub alphabet: String,
    pub styles_per_class: usize,
    pub pitch: usize,

    pub arch: String,
    pub activation: Activation,
    pub location: bool,
    pub dropout: f64,
    pub invert: bool,

    pub minibatch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub linf_clip: f64,
    pub epochs: usize,
    pub lr_decay: f64,
    /// 0 disables early stopping.
    pub patience: usize,

    pub distortion: bool,
    pub max_translate: f64,
    pub max_rotate: f64,
    pub zoom_min: f64,
    pub zoom_max: f64,
    pub elastic_sigma: f64,
    pub elastic_alpha: f64,
    pub saltpepper: f64,

    pub language_seed: u64,
    pub corpus_sentences: usize,
    pub lm_weights: [f64; 3],
    pub n: usize,

    pub m: usize,
    pub lambda: f64,
    pub combine: CombineRuleWeights,

    pub pages: usize,
    pub lines_min: usize,
    pub lines_max: usize,
    pub skew_max: f64,
    pub erasure: f64,

    pub skew_range: f64,
    pub skew_step: f64,
    pub connectivity: u32,
    pub nominal_pitch: f64,

    pub ablate_runs: usize,
    pub ablate_variants: Vec<String>,
}

pub const DEFAULT_VARIANTS: &str = "baseline,no-distortion,no-dropout,no-regularization,tanh,relu,inverted,\
no-location,dropout-0,dropout-0.2,dropout-0.4,dropout-0.5,dropout-0.6,dropout-0.8";

impl Default for Config {
    fn default() -> Self {
        let train = TrainConfig::default();
        let dist = DistortionParams::default();
        let seg = SegmentParams::default();
        Config {
            seed: 1,
            alphabet: "standard".into(),
            styles_per_class: 160,
            pitch: Layout::default().pitch,
            arch: "48x48-8C3-MP2-24C3-MP2-72C3-MP2-100N-16SM".into(),
            activation: Activation::Leaky,
            location: true,
            dropout: 0.5,
            invert: false,
            minibatch: train.minibatch,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            nesterov: train.nesterov,
            linf_clip: train.linf_clip,
            epochs: train.epochs,
            lr_decay: train.lr_decay,
            patience: 0,
            distortion: true,
            max_translate: dist.max_translate,
            max_rotate: dist.max_rotate,
            zoom_min: dist.zoom_range.0,
            zoom_max: dist.zoom_range.1,
            elastic_sigma: dist.elastic_sigma,
            elastic_alpha: dist.elastic_alpha,
            saltpepper: dist.saltpepper_p,
            language_seed: 7,
            corpus_sentences: 100_000,
            lm_weights: glyphocr::langmodel::TrigramTable::DEFAULT_WEIGHTS,
            n: 3,
            m: 5,
            lambda: 1.0,
            combine: CombineRuleWeights::default(),
            pages: 20,
            lines_min: 3,
            lines_max: 10,
            skew_max: 3.0,
            erasure: 0.0,
            skew_range: seg.skew_range,
            skew_step: seg.skew_step,
            connectivity: 8,
            nominal_pitch: seg.nominal_pitch,
            ablate_runs: 5,
            ablate_variants: DEFAULT_VARIANTS.split(',').map(String::from).collect(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, UsageError> {
    value
        .parse()
        .map_err(|_| UsageError(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, UsageError> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(UsageError(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl Config {
    /// Every key with its current value, in documentation order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let c = &self.combine;
        vec![
            ("seed", self.seed.to_string()),
            ("alphabet", self.alphabet.clone()),
            ("styles_per_class", self.styles_per_class.to_string()),
            ("pitch", self.pitch.to_string()),
            ("arch", self.arch.clone()),
            ("activation", self.activation.name().into()),
            ("location", self.location.to_string()),
            ("dropout", self.dropout.to_string()),
            ("invert", self.invert.to_string()),
            ("minibatch", self.minibatch.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("momentum", self.momentum.to_string()),
            ("nesterov", self.nesterov.to_string()),
            ("linf_clip", self.linf_clip.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("patience", self.patience.to_string()),
            ("distortion", self.distortion.to_string()),
            ("max_translate", self.max_translate.to_string()),
            ("max_rotate", self.max_rotate.to_string()),
            ("zoom_min", self.zoom_min.to_string()),
            ("zoom_max", self.zoom_max.to_string()),
            ("elastic_sigma", self.elastic_sigma.to_string()),
            ("elastic_alpha", self.elastic_alpha.to_string()),
            ("saltpepper", self.saltpepper.to_string()),
            ("language_seed", self.language_seed.to_string()),
            ("corpus_sentences", self.corpus_sentences.to_string()),
            ("lm_w1", self.lm_weights[0].to_string()),
            ("lm_w2", self.lm_weights[1].to_string()),
            ("lm_w3", self.lm_weights[2].to_string()),
            ("n", self.n.to_string()),
            ("m", self.m.to_string()),
            ("lambda", self.lambda.to_string()),
            ("combine_bias", c.bias.to_string()),
            ("combine_small_ink", c.small_ink.to_string()),
            ("combine_narrow", c.narrow.to_string()),
            ("combine_overlap", c.overlap.to_string()),
            ("combine_gap", c.gap.to_string()),
            ("combine_unsure_left", c.unsure_left.to_string()),
            ("combine_unsure_right", c.unsure_right.to_string()),
            ("combine_bigram", c.bigram.to_string()),
            ("combine_threshold", c.threshold.to_string()),
            ("pages", self.pages.to_string()),
            ("lines_min", self.lines_min.to_string()),
            ("lines_max", self.lines_max.to_string()),
            ("skew_max", self.skew_max.to_string()),
            ("erasure", self.erasure.to_string()),
            ("skew_range", self.skew_range.to_string()),
            ("skew_step", self.skew_step.to_string()),
            ("connectivity", self.connectivity.to_string()),
            ("nominal_pitch", self.nominal_pitch.to_string()),
            ("ablate_runs", self.ablate_runs.to_string()),
            ("ablate_variants", self.ablate_variants.join(",")),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "alphabet" => self.alphabet = v.to_string(),
            "styles_per_class" => self.styles_per_class = parse(key, v)?,
            "pitch" => self.pitch = parse(key, v)?,
            "arch" => self.arch = v.to_string(),
            "activation" => {
                self.activation = Activation::parse(v).map_err(|e| UsageError(e.to_string()))?
            }
            "location" => self.location = parse_bool(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "invert" => self.invert = parse_bool(key, v)?,
            "minibatch" => self.minibatch = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "nesterov" => self.nesterov = parse_bool(key, v)?,
            "linf_clip" => self.linf_clip = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "lr_decay" => self.lr_decay = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "distortion" => self.distortion = parse_bool(key, v)?,
            "max_translate" => self.max_translate = parse(key, v)?,
            "max_rotate" => self.max_rotate = parse(key, v)?,
            "zoom_min" => self.zoom_min = parse(key, v)?,
            "zoom_max" => self.zoom_max = parse(key, v)?,
            "elastic_sigma" => self.elastic_sigma = parse(key, v)?,
            "elastic_alpha" => self.elastic_alpha = parse(key, v)?,
            "saltpepper" => self.saltpepper = parse(key, v)?,
            "language_seed" => self.language_seed = parse(key, v)?,
            "corpus_sentences" => self.corpus_sentences = parse(key, v)?,
            "lm_w1" => self.lm_weights[0] = parse(key, v)?,
            "lm_w2" => self.lm_weights[1] = parse(key, v)?,
            "lm_w3" => self.lm_weights[2] = parse(key, v)?,
            "n" => self.n = parse(key, v)?,
            "m" => self.m = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "combine_bias" => self.combine.bias = parse(key, v)?,
            "combine_small_ink" => self.combine.small_ink = parse(key, v)?,
            "combine_narrow" => self.combine.narrow = parse(key, v)?,
            "combine_overlap" => self.combine.overlap = parse(key, v)?,
            "combine_gap" => self.combine.gap = parse(key, v)?,
            "combine_unsure_left" => self.combine.unsure_left = parse(key, v)?,
            "combine_unsure_right" => self.combine.unsure_right = parse(key, v)?,
            "combine_bigram" => self.combine.bigram = parse(key, v)?,
            "combine_threshold" => self.combine.threshold = parse(key, v)?,
            "pages" => self.pages = parse(key, v)?,
            "lines_min" => self.lines_min = parse(key, v)?,
            "lines_max" => self.lines_max = parse(key, v)?,
            "skew_max" => self.skew_max = parse(key, v)?,
            "erasure" => self.erasure = parse(key, v)?,
            "skew_range" => self.skew_range = parse(key, v)?,
            "skew_step" => self.skew_step = parse(key, v)?,
            "connectivity" => self.connectivity = parse(key, v)?,
            "nominal_pitch" => self.nominal_pitch = parse(key, v)?,
            "ablate_runs" => self.ablate_runs = parse(key, v)?,
            "ablate_variants" => {
                self.ablate_variants = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            _ => return Err(UsageError(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), UsageError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| UsageError(format!("config line {}: {}", i + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Config, UsageError> {
        let mut c = Config::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Ok(Config::from_text(&text)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    /// Checks that every derived parameter set is valid.
    pub fn validate(&self) -> Result<(), UsageError> {
        let wrap = |e: glyphocr::Error| UsageError(e.to_string());
        self.alphabet_spec().map_err(wrap)?;
        self.network_spec().map_err(wrap)?;
        self.train_config().validate().map_err(wrap)?;
        self.distortion_params().validate().map_err(wrap)?;
        self.combine.validate().map_err(wrap)?;
        let bad = |what: &str| Err(UsageError(format!("invalid configuration: {what}")));
        if self.styles_per_class == 0 || self.pitch == 0 {
            return bad("styles_per_class and pitch must be positive");
        }
        if !(1..=3).contains(&self.n) {
            return bad("n must be 1, 2 or 3");
        }
        if self.m == 0 {
            return bad("m must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if self.lines_min == 0 || self.lines_min > self.lines_max {
            return bad("need 1 <= lines_min <= lines_max");
        }
        if !(0.0..=0.5).contains(&self.erasure) {
            return bad("erasure must lie in [0, 0.5]");
        }
        if !(0.0..=10.0).contains(&self.skew_max) {
            return bad("skew_max must lie in [0, 10]");
        }
        if Connectivity::from_count(self.connectivity).is_none() {
            return bad("connectivity must be 4 or 8");
        }
        if self.ablate_runs == 0 {
            return bad("ablate_runs must be positive");
        }
        for v in &self.ablate_variants {
            crate::ablate::Variant::parse(v)?;
        }
        let w = self.lm_weights;
        if w.iter().any(|&x| x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("lm_w1 + lm_w2 + lm_w3 must be 1 with non-negative weights");
        }
        Ok(())
    }

    pub fn alphabet_spec(&self) -> glyphocr::Result<AlphabetSpec> {
        AlphabetSpec::by_name(&self.alphabet)
    }

    pub fn network_spec(&self) -> glyphocr::Result<NetworkSpec> {
        let mut spec = parse_architecture(&self.arch)?
            .with_location(self.location)
            .with_dropout(self.dropout)
            .with_activation(self.activation);
        spec.invert_input = self.invert;
        spec.validate()?;
        Ok(spec)
    }

    pub fn distortion_params(&self) -> DistortionParams {
        DistortionParams {
            max_translate: self.max_translate,
            max_rotate: self.max_rotate,
            zoom_range: (self.zoom_min, self.zoom_max),
            elastic_sigma: self.elastic_sigma,
            elastic_alpha: self.elastic_alpha,
            saltpepper_p: self.saltpepper,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            minibatch: self.minibatch,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            nesterov: self.nesterov,
            linf_clip: self.linf_clip,
            epochs: self.epochs,
            lr_decay: self.lr_decay,
            patience: (self.patience > 0).then_some(self.patience),
            seed: self.seed,
            distortion: self.distortion.then(|| self.distortion_params()),
        }
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            skew_range: self.skew_range,
            skew_step: self.skew_step,
            connectivity: Connectivity::from_count(self.connectivity).unwrap_or(Connectivity::Eight),
            nominal_pitch: self.nominal_pitch,
        }
    }

    pub fn decode_params(&self, use_lm: bool) -> DecodeParams {
        DecodeParams {
            m: self.m,
            lambda: self.lambda,
            combine: self.combine.clone(),
            use_lm,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            pitch: self.pitch,
            ..Layout::default()
        }
    }
}
