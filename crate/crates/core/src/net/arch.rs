//! Architecture strings such as `48x48-8C3-MP2-24C3-MP2-72C3-MP2-100N-16SM`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// `mCk`: `out` maps, `k`×`k` kernel, same-size zero padding.
    Conv { k: usize, out: usize },
    /// `MP2`: non-overlapping 2×2 max pooling.
    MaxPool,
    /// `mN`: fully connected layer of `n` units.
    Full { n: usize },
    /// `mSM`: softmax output over `k` classes.
    SoftmaxOut { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Leak of this layer's activation; zero for pooling and output.
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `x₊ − α·x₋` with the per-layer leak schedule.
    Leaky,
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Leaky => "leaky",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Activation> {
        match s {
            "leaky" => Ok(Activation::Leaky),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::InvalidParameter(format!("unknown activation {s:?}"))),
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Leaky => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    fn from_code(c: u8) -> Option<Activation> {
        [Activation::Leaky, Activation::Relu, Activation::Tanh]
            .into_iter()
            .find(|a| a.code() == c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    /// The architecture string this spec was parsed from.
    pub arch: String,
    pub input_side: usize,
    pub layers: Vec<LayerSpec>,
    /// Append the two standardized location features to the softmax input.
    pub use_location: bool,
    /// Dropout rate on the extracted features feeding the softmax.
    pub dropout: f64,
    pub num_classes: usize,
    pub activation: Activation,
    /// Feed ink as 0 and background as 1.
    pub invert_input: bool,
    pub bias: bool,
}

/// Shape of an activation: `d` maps of `h`×`w`, or a flat vector (`h = w = 1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.d * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Leak of the `i`-th of `l` activated layers, interpolated geometrically
/// from 0.5 down to 0.05.
pub fn alpha_for_layer(i: usize, l: usize) -> f64 {
    if l <= 1 {
        return 0.5;
    }
    0.5 * 0.1f64.powf(i as f64 / (l - 1) as f64)
}

fn arch_err(spec: &str, reason: impl Into<String>) -> Error {
    Error::Architecture {
        spec: spec.to_string(),
        reason: reason.into(),
    }
}

fn count(token: &str, suffix_at: usize, spec: &str) -> Result<usize> {
    let n: usize = token[..suffix_at]
        .parse()
        .map_err(|_| arch_err(spec, format!("bad count in {token:?}")))?;
    if n == 0 {
        return Err(arch_err(spec, format!("zero count in {token:?}")));
    }
    Ok(n)
}

/// Parses `SxS-tok-tok-...-KSM` with tokens `mCk`, `MP2`, `mN`, `mSM`.
pub fn parse_architecture(s: &str) -> Result<NetworkSpec> {
    let mut tokens = s.trim().split('-');
    let size = tokens.next().unwrap_or("");
    let (a, b) = size
        .split_once(['x', 'X'])
        .ok_or_else(|| arch_err(s, format!("input size {size:?} is not SxS")))?;
    let side: usize = a.parse().map_err(|_| arch_err(s, "bad input size"))?;
    if b.parse::<usize>().ok() != Some(side) || side == 0 {
        return Err(arch_err(s, "input must be a non-empty square"));
    }
    let mut kinds = Vec::new();
    let mut spatial = side;
    let mut flat = false;
    for tok in tokens {
        let kind = if let Some(k) = tok.strip_suffix("SM") {
            LayerKind::SoftmaxOut {
                k: count(tok, k.len(), s)?,
            }
        } else if let Some(p) = tok.strip_prefix("MP") {
            if p != "2" {
                return Err(arch_err(s, format!("only 2x2 pooling is supported, got {tok:?}")));
            }
            if flat {
                return Err(arch_err(s, "pooling after a fully connected layer"));
            }
            if spatial % 2 != 0 {
                return Err(arch_err(s, format!("cannot pool odd dimension {spatial}")));
            }
            spatial /= 2;
            LayerKind::MaxPool
        } else if let Some(n) = tok.strip_suffix('N') {
            flat = true;
            LayerKind::Full {
                n: count(tok, n.len(), s)?,
            }
        } else if let Some(pos) = tok.find('C') {
            if flat {
                return Err(arch_err(s, "convolution after a fully connected layer"));
            }
            let out = count(tok, pos, s)?;
            let k: usize = tok[pos + 1..]
                .parse()
                .map_err(|_| arch_err(s, format!("bad kernel in {tok:?}")))?;
            if k % 2 == 0 {
                return Err(arch_err(s, format!("kernel {k} is not odd")));
            }
            LayerKind::Conv { k, out }
        } else {
            return Err(arch_err(s, format!("unknown token {tok:?}")));
        };
        if matches!(kinds.last(), Some(LayerKind::SoftmaxOut { .. })) {
            return Err(arch_err(s, "softmax must be the last layer"));
        }
        kinds.push(kind);
    }
    let num_classes = match kinds.last() {
        Some(LayerKind::SoftmaxOut { k }) => *k,
        _ => return Err(arch_err(s, "missing SM output layer")),
    };
    let activated = kinds
        .iter()
        .filter(|k| matches!(k, LayerKind::Conv { .. } | LayerKind::Full { .. }))
        .count();
    let mut i = 0;
    let layers = kinds
        .into_iter()
        .map(|kind| {
            let alpha = match kind {
                LayerKind::Conv { .. } | LayerKind::Full { .. } => {
                    i += 1;
                    alpha_for_layer(i - 1, activated)
                }
                _ => 0.0,
            };
            LayerSpec { kind, alpha }
        })
        .collect();
    Ok(NetworkSpec {
        arch: s.trim().to_string(),
        input_side: side,
        layers,
        use_location: false,
        dropout: 0.0,
        num_classes,
        activation: Activation::Leaky,
        invert_input: false,
        bias: true,
    })
}

impl NetworkSpec {
    pub fn with_location(mut self, on: bool) -> Self {
        self.use_location = on;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    pub fn with_activation(mut self, a: Activation) -> Self {
        self.activation = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Input shape of every layer followed by the network output shape.
    pub fn shapes(&self) -> Vec<Shape> {
        let mut cur = Shape {
            d: 1,
            h: self.input_side,
            w: self.input_side,
        };
        let mut out = vec![cur];
        for layer in &self.layers {
            cur = match layer.kind {
                LayerKind::Conv { out, .. } => Shape { d: out, ..cur },
                LayerKind::MaxPool => Shape {
                    d: cur.d,
                    h: cur.h / 2,
                    w: cur.w / 2,
                },
                LayerKind::Full { n } => Shape { d: n, h: 1, w: 1 },
                LayerKind::SoftmaxOut { k } => Shape { d: k, h: 1, w: 1 },
            };
            out.push(cur);
        }
        out
    }

    /// Number of extracted features feeding the softmax layer.
    pub fn feature_len(&self) -> usize {
        let shapes = self.shapes();
        shapes[shapes.len() - 2].len()
    }

    /// Activation leak actually applied by `layer`.
    pub fn leak(&self, layer: &LayerSpec) -> f64 {
        match self.activation {
            Activation::Leaky => layer.alpha,
            Activation::Relu | Activation::Tanh => 0.0,
        }
    }

    pub(crate) fn flags(&self) -> [u8; 4] {
        [
            self.use_location as u8,
            self.activation.code(),
            self.invert_input as u8,
            self.bias as u8,
        ]
    }

    pub(crate) fn apply_flags(&mut self, f: [u8; 4]) -> Result<()> {
        let bad = |what: &str| Error::Format(format!("bad {what} flag in model header"));
        if f[0] > 1 || f[2] > 1 || f[3] > 1 {
            return Err(bad("boolean"));
        }
        self.use_location = f[0] == 1;
        self.activation = Activation::from_code(f[1]).ok_or_else(|| bad("activation"))?;
        self.invert_input = f[2] == 1;
        self.bias = f[3] == 1;
        Ok(())
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.arch)?;
        if self.use_location {
            write!(f, " +location")?;
        }
        if self.dropout > 0.0 {
            write!(f, " dropout={}", self.dropout)?;
        }
        if self.activation != Activation::Leaky {
            write!(f, " {}", self.activation.name())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_regression() {
        let s = parse_architecture("48x48-457SM").unwrap();
        assert_eq!(s.layers.len(), 1);
        assert_eq!(s.num_classes, 457);
        assert_eq!(s.feature_len(), 2304);
    }

    #[test]
    fn traditional_shapes() {
        let s = parse_architecture("48x48-8C3-MP2-24C3-MP2-72C3-MP2-500N-457SM").unwrap();
        let conv = s.layers.iter().filter(|l| matches!(l.kind, LayerKind::Conv { .. })).count();
        let pool = s.layers.iter().filter(|l| l.kind == LayerKind::MaxPool).count();
        assert_eq!((conv, pool), (3, 3));
        let shapes = s.shapes();
        assert_eq!(shapes[2], Shape { d: 8, h: 24, w: 24 });
        assert_eq!(shapes[4], Shape { d: 24, h: 12, w: 12 });
        assert_eq!(shapes[6], Shape { d: 72, h: 6, w: 6 });
        assert_eq!(shapes[6].len(), 2592);
        assert_eq!(s.feature_len(), 500);
    }

    #[test]
    fn odd_pool_is_rejected() {
        let err = parse_architecture("48x48-4C3-MP2-MP2-MP2-MP2-MP2-457SM").unwrap_err();
        match err {
            Error::Architecture { reason, .. } => assert!(reason.contains("odd dimension 3")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_strings() {
        for s in [
            "", "48x48", "48x40-10SM", "48x48-8C3", "48x48-8C4-10SM", "48x48-MP3-10SM",
            "48x48-0N-10SM", "48x48-10SM-10SM", "48x48-8Q3-10SM", "48x48-10N-8C3-10SM",
        ] {
            assert!(parse_architecture(s).is_err(), "{s:?} accepted");
        }
    }

    #[test]
    fn leak_schedule() {
        assert_eq!(alpha_for_layer(0, 5), 0.5);
        assert!((alpha_for_layer(4, 5) - 0.05).abs() < 1e-15);
        assert!((alpha_for_layer(1, 3) - (0.5f64 * 0.05).sqrt()).abs() < 1e-15);
        assert!((alpha_for_layer(1, 3) - 0.1581).abs() < 1e-4);
        assert_eq!(alpha_for_layer(0, 1), 0.5);
        let s = parse_architecture("48x48-8C3-MP2-24C3-MP2-72C3-MP2-100N-16SM").unwrap();
        let alphas: Vec<f64> = s.layers.iter().map(|l| l.alpha).collect();
        assert_eq!(alphas[0], 0.5);
        assert_eq!(alphas[1], 0.0);
        assert!((alphas[6] - 0.05).abs() < 1e-15);
        assert!(alphas.iter().all(|a| (0.0..1.0).contains(a)));
    }
}
