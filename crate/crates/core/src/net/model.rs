//! Parameters, forward and backward passes, and the model file.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{parse_architecture, Activation, LayerKind, NetworkSpec, Shape};
use super::layers::{col2im, im2col, leaky_relu, leaky_relu_grad, maxpool_raw, softmax, ConvWeights, Dense};
use crate::error::{Error, Result};
use crate::raster::BinaryImage;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Conv(ConvWeights),
    Pool,
    Dense(Dense),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    /// All-zero parameters shaped for `spec`.
    pub fn zeros(spec: &NetworkSpec) -> NetworkParams {
        let shapes = spec.shapes();
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| match l.kind {
                LayerKind::Conv { k, out } => LayerParams::Conv(ConvWeights::zeros(out, shapes[i].d, k)),
                LayerKind::MaxPool => LayerParams::Pool,
                LayerKind::Full { n } => LayerParams::Dense(Dense::zeros(n, shapes[i].len())),
                LayerKind::SoftmaxOut { k } => {
                    let extra = if spec.use_location { 2 } else { 0 };
                    LayerParams::Dense(Dense::zeros(k, shapes[i].len() + extra))
                }
            })
            .collect();
        NetworkParams { layers }
    }

    /// Weights and biases of every layer, in file order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerParams::Conv(c) => out.extend([c.w.as_slice(), c.b.as_slice()]),
                LayerParams::Dense(d) => out.extend([d.w.as_slice(), d.b.as_slice()]),
                LayerParams::Pool => {}
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                LayerParams::Conv(c) => out.extend([&mut c.w, &mut c.b]),
                LayerParams::Dense(d) => out.extend([&mut d.w, &mut d.b]),
                LayerParams::Pool => {}
            }
        }
        out
    }

    /// Index into `layers` of each tensor from [`NetworkParams::tensors`].
    pub fn tensor_layers(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if !matches!(l, LayerParams::Pool) {
                out.extend([i, i]);
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Adds `other` into `self`, tensor by tensor.
    pub fn add_assign(&mut self, other: &NetworkParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Rounds every value through `f32`, as stored in the model file.
    pub fn quantized(&self) -> NetworkParams {
        let mut q = self.clone();
        for t in q.tensors_mut() {
            t.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
        q
    }
}

/// Glorot-uniform weights `U(−a, a)`, `a = √(6 / (fan_in + fan_out))`,
/// and zero biases.
pub fn weight_init(spec: &NetworkSpec, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(spec);
    for l in &mut params.layers {
        let (w, fan_in, fan_out) = match l {
            LayerParams::Conv(c) => (&mut c.w, c.d_in * c.k * c.k, c.d_out * c.k * c.k),
            LayerParams::Dense(d) => (&mut d.w, d.n_in, d.n_out),
            LayerParams::Pool => continue,
        };
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        w.iter_mut().for_each(|v| *v = rng.gen_range(-a..a));
    }
    params
}

/// Affine standardization of the two location features.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocationStats {
    pub mean: [f64; 2],
    pub sd: [f64; 2],
}

impl Default for LocationStats {
    fn default() -> Self {
        LocationStats {
            mean: [0.0; 2],
            sd: [1.0; 2],
        }
    }
}

impl LocationStats {
    pub fn apply(&self, loc: [f64; 2]) -> [f64; 2] {
        [
            (loc[0] - self.mean[0]) / self.sd[0],
            (loc[1] - self.mean[1]) / self.sd[1],
        ]
    }
}

/// Mean and population standard deviation of each feature. A feature with
/// zero spread gets `sd = 1`, so it standardizes to 0.
pub fn standardize_locations(raw: &[[f64; 2]]) -> Result<LocationStats> {
    if raw.len() < 2 {
        return Err(Error::InvalidParameter("need at least two location samples".into()));
    }
    let n = raw.len() as f64;
    let mut stats = LocationStats::default();
    for f in 0..2 {
        let mean = raw.iter().map(|r| r[f]).sum::<f64>() / n;
        let var = raw.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
        stats.mean[f] = mean;
        stats.sd[f] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    Ok(stats)
}

/// `p_k^λ / Σ_j p_j^λ`: scales the softmax logits by λ.
pub fn recalibrate(probs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
    }
    // work in log space so that tiny λ does not round every term to 1
    let logs: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { lambda * p.ln() } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter("all probabilities are zero".into()));
    }
    let e: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / total).collect())
}

/// Dropout handling for one forward pass.
pub enum Mode<'a> {
    Infer,
    /// Draw a fresh mask from the generator.
    Train(&'a mut ChaCha8Rng),
    /// Use the given mask over the extracted features.
    Mask(&'a [f64]),
}

/// State retained by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer; `acts[0]` is the encoded image.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of conv and dense layers.
    pre: Vec<Vec<f64>>,
    cols: Vec<Vec<f64>>,
    routes: Vec<Vec<u32>>,
    /// Extracted features after dropout, plus location features.
    softmax_input: Vec<f64>,
    pub mask: Option<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardCache {
    /// Input of the softmax layer: extracted features after dropout,
    /// followed by the standardized location features when enabled.
    pub fn softmax_input(&self) -> &[f64] {
        &self.softmax_input
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
    pub location: LocationStats,
}

const MAGIC: &[u8; 8] = b"GLYPHNET";
const VERSION: u32 = 1;

impl Network {
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Network> {
        spec.validate()?;
        let params = weight_init(&spec, seed);
        Ok(Network {
            spec,
            params,
            location: LocationStats::default(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Pixel values fed to the network.
    pub fn encode(&self, image: &BinaryImage) -> Result<Vec<f64>> {
        let side = self.spec.input_side;
        if image.width() != side || image.height() != side {
            return Err(Error::Shape(format!(
                "{}x{} glyph for a {side}x{side} network",
                image.width(),
                image.height()
            )));
        }
        let (on, off) = if self.spec.invert_input { (0.0, 1.0) } else { (1.0, 0.0) };
        Ok(image.bits().iter().map(|&b| if b != 0 { on } else { off }).collect())
    }

    fn act(&self, x: f64, alpha: f64) -> f64 {
        match self.spec.activation {
            Activation::Tanh => x.tanh(),
            _ => leaky_relu(x, alpha),
        }
    }

    fn act_grad(&self, x: f64, alpha: f64) -> f64 {
        match self.spec.activation {
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            _ => leaky_relu_grad(x, alpha),
        }
    }

    pub fn forward(&self, image: &BinaryImage, location: [f64; 2], mode: Mode) -> Result<ForwardCache> {
        let input = self.encode(image)?;
        self.forward_input(input, location, mode)
    }

    /// Class probabilities in inference mode.
    pub fn predict(&self, image: &BinaryImage, location: [f64; 2]) -> Result<Vec<f64>> {
        Ok(self.forward(image, location, Mode::Infer)?.probs)
    }

    /// Forward pass on an already encoded input of `input_side²` values.
    pub fn forward_input(&self, input: Vec<f64>, location: [f64; 2], mut mode: Mode) -> Result<ForwardCache> {
        let shapes: Vec<Shape> = self.spec.shapes();
        if input.len() != shapes[0].len() {
            return Err(Error::Shape(format!("{} inputs, expected {}", input.len(), shapes[0].len())));
        }
        let n = self.spec.layers.len();
        let mut cache = ForwardCache {
            acts: Vec::with_capacity(n),
            pre: vec![Vec::new(); n],
            cols: vec![Vec::new(); n],
            routes: vec![Vec::new(); n],
            softmax_input: Vec::new(),
            mask: None,
            logits: Vec::new(),
            probs: Vec::new(),
        };
        let mut cur = input;
        for (i, (layer, params)) in self.spec.layers.iter().zip(&self.params.layers).enumerate() {
            let sh = shapes[i];
            let alpha = self.spec.leak(layer);
            let next = match (&layer.kind, params) {
                (LayerKind::Conv { k, .. }, LayerParams::Conv(cw)) => {
                    let plane = sh.h * sh.w;
                    let mut col = Vec::new();
                    im2col(&cur, sh.d, sh.h, sh.w, *k, &mut col);
                    let mut z = vec![0.0; cw.d_out * plane];
                    cw.forward_col(&col, plane, &mut z);
                    let a = z.iter().map(|&v| self.act(v, alpha)).collect();
                    cache.cols[i] = col;
                    cache.pre[i] = z;
                    a
                }
                (LayerKind::MaxPool, LayerParams::Pool) => {
                    let (out, routes) = maxpool_raw(&cur, sh.d, sh.h, sh.w);
                    cache.routes[i] = routes;
                    out
                }
                (LayerKind::Full { .. }, LayerParams::Dense(d)) => {
                    let z = d.forward_raw(&cur);
                    let a = z.iter().map(|&v| self.act(v, alpha)).collect();
                    cache.pre[i] = z;
                    a
                }
                (LayerKind::SoftmaxOut { .. }, LayerParams::Dense(d)) => {
                    let mut x = cur.clone();
                    let mask = match &mut mode {
                        Mode::Infer => None,
                        Mode::Mask(m) => {
                            if m.len() != x.len() {
                                return Err(Error::Shape(format!(
                                    "dropout mask of {} for {} features",
                                    m.len(),
                                    x.len()
                                )));
                            }
                            Some(m.to_vec())
                        }
                        Mode::Train(rng) if self.spec.dropout > 0.0 => {
                            let keep = 1.0 / (1.0 - self.spec.dropout);
                            Some(
                                (0..x.len())
                                    .map(|_| if rng.gen_bool(self.spec.dropout) { 0.0 } else { keep })
                                    .collect(),
                            )
                        }
                        Mode::Train(_) => None,
                    };
                    if let Some(m) = &mask {
                        x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                    }
                    if self.spec.use_location {
                        let loc = self.location.apply(location);
                        x.extend(loc);
                    }
                    let z = d.forward_raw(&x);
                    cache.probs = softmax(&z);
                    cache.logits = z;
                    cache.softmax_input = x;
                    cache.mask = mask;
                    Vec::new()
                }
                _ => return Err(Error::Shape(format!("parameters of layer {i} do not match the spec"))),
            };
            cache.acts.push(std::mem::replace(&mut cur, next));
        }
        Ok(cache)
    }

    /// Adds the gradient of `−ln p_label` for one forward pass into `grad`.
    pub fn backward(&self, cache: &ForwardCache, label: usize, grad: &mut NetworkParams) -> Result<()> {
        let k = self.spec.num_classes;
        if label >= k {
            return Err(Error::InvalidParameter(format!("label {label} outside {k} classes")));
        }
        if cache.acts.len() != self.spec.layers.len() || cache.probs.len() != k {
            return Err(Error::Shape("forward cache does not belong to this network".into()));
        }
        let shapes = self.spec.shapes();
        let mut d_out: Vec<f64> = Vec::new();
        for i in (0..self.spec.layers.len()).rev() {
            let layer = &self.spec.layers[i];
            let alpha = self.spec.leak(layer);
            let sh = shapes[i];
            let d_in = match (&layer.kind, &self.params.layers[i], &mut grad.layers[i]) {
                (LayerKind::SoftmaxOut { .. }, LayerParams::Dense(d), LayerParams::Dense(g)) => {
                    let mut dz = cache.probs.clone();
                    dz[label] -= 1.0;
                    let mut dx = d.backward_raw(&cache.softmax_input, &dz, g);
                    dx.truncate(sh.len());
                    if let Some(m) = &cache.mask {
                        dx.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                    }
                    dx
                }
                (LayerKind::Full { .. }, LayerParams::Dense(d), LayerParams::Dense(g)) => {
                    let dz: Vec<f64> = d_out
                        .iter()
                        .zip(&cache.pre[i])
                        .map(|(g, &z)| g * self.act_grad(z, alpha))
                        .collect();
                    d.backward_raw(&cache.acts[i], &dz, g)
                }
                (LayerKind::MaxPool, LayerParams::Pool, LayerParams::Pool) => {
                    let mut dx = vec![0.0; sh.len()];
                    for (&src, &g) in cache.routes[i].iter().zip(&d_out) {
                        dx[src as usize] += g;
                    }
                    dx
                }
                (LayerKind::Conv { k, .. }, LayerParams::Conv(cw), LayerParams::Conv(g)) => {
                    let plane = sh.h * sh.w;
                    let dz: Vec<f64> = d_out
                        .iter()
                        .zip(&cache.pre[i])
                        .map(|(g, &z)| g * self.act_grad(z, alpha))
                        .collect();
                    match cw.backward_col(&cache.cols[i], plane, &dz, g, i > 0) {
                        Some(dcol) => {
                            let mut dx = vec![0.0; sh.len()];
                            col2im(&dcol, sh.d, sh.h, sh.w, *k, &mut dx);
                            dx
                        }
                        None => Vec::new(),
                    }
                }
                _ => return Err(Error::Shape(format!("gradient buffer of layer {i} does not match"))),
            };
            d_out = d_in;
        }
        if !self.spec.bias {
            for l in &mut grad.layers {
                match l {
                    LayerParams::Conv(c) => c.b.iter_mut().for_each(|b| *b = 0.0),
                    LayerParams::Dense(d) => d.b.iter_mut().for_each(|b| *b = 0.0),
                    LayerParams::Pool => {}
                }
            }
        }
        Ok(())
    }

    /// Gradient of the summed NLL of a batch, each sample under its own mask.
    pub fn batch_gradient(&self, batch: &[(Vec<f64>, [f64; 2], usize, Option<Vec<f64>>)]) -> Result<(f64, NetworkParams)> {
        let mut grad = NetworkParams::zeros(&self.spec);
        let mut loss = 0.0;
        for (input, loc, label, mask) in batch {
            let mode = match mask {
                Some(m) => Mode::Mask(m),
                None => Mode::Infer,
            };
            let cache = self.forward_input(input.clone(), *loc, mode)?;
            loss -= cache.probs[*label].max(super::NLL_FLOOR).ln();
            self.backward(&cache, *label, &mut grad)?;
        }
        Ok((loss, grad))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let arch = self.spec.arch.as_bytes();
        out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
        out.extend_from_slice(arch);
        out.extend_from_slice(&self.spec.flags());
        out.extend_from_slice(&self.spec.dropout.to_le_bytes());
        for v in self.location.mean.iter().chain(&self.location.sd) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in self.params.tensors() {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            for &v in t {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a glyph network file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let len = r.u32()? as usize;
        let arch = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("architecture string is not UTF-8".into()))?;
        let mut spec = parse_architecture(arch)?;
        let flags = r.take(4)?;
        spec.apply_flags([flags[0], flags[1], flags[2], flags[3]])?;
        spec.dropout = r.f64()?;
        spec.validate()?;
        let mut location = LocationStats::default();
        for f in 0..2 {
            location.mean[f] = r.f64()?;
        }
        for f in 0..2 {
            location.sd[f] = r.f64()?;
        }
        let mut params = NetworkParams::zeros(&spec);
        for t in params.tensors_mut() {
            let n = r.u32()? as usize;
            if n != t.len() {
                return Err(Error::Format(format!("tensor of {n} values, expected {}", t.len())));
            }
            for v in t.iter_mut() {
                let b = r.take(4)?;
                *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after the last tensor".into()));
        }
        Ok(Network { spec, params, location })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Network> {
        Network::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("model file is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(f64::from_le_bytes(a))
    }
}
