//! Minibatch SGD with momentum, early stopping on the validation split.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{standardize_locations, ForwardCache, Mode, Network, NetworkParams};
use super::{NetworkSpec, Sample, NLL_FLOOR};
use crate::distortion::{distort, DistortionParams};
use crate::error::{Error, Result};
use crate::synth::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub minibatch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    /// Element-wise bound on gradients.
    pub linf_clip: f64,
    pub epochs: usize,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub seed: u64,
    pub distortion: Option<DistortionParams>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            minibatch: 20,
            learning_rate: 0.02,
            momentum: 0.9,
            nesterov: true,
            linf_clip: 1.0,
            epochs: 30,
            lr_decay: 1.0,
            patience: None,
            seed: 1,
            distortion: Some(DistortionParams::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.minibatch > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.linf_clip > 0.0
            && self.lr_decay > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Error on the training presentations of this epoch, in training mode.
    pub train_err: f64,
    pub train_loss: f64,
    pub valid_err: f64,
    /// Mean negative log-likelihood on the validation split.
    pub valid_loss: f64,
    pub test_err: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub best_valid_err: f64,
    pub best_valid_loss: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_err,train_loss,valid_err,valid_loss,test_err\n");
        for e in &self.epochs {
            let test = e.test_err.map(|t| t.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.epoch, e.train_err, e.train_loss, e.valid_err, e.valid_loss, test
            )
            .unwrap();
        }
        out
    }
}

/// `−Σ ln p_y`, with probabilities clamped at 1e−30.
pub fn nll_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", probs.len(), labels.len())));
    }
    let mut loss = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        let py = *p
            .get(y)
            .ok_or_else(|| Error::InvalidParameter(format!("label {y} outside {} classes", p.len())))?;
        loss -= py.max(NLL_FLOOR).ln();
    }
    Ok(loss)
}

/// Clips `grads` element-wise to `±linf_clip`, then `v ← μv − ηg` and
/// `w ← w + v` (classic) or `w ← w + μv − ηg` (Nesterov). Nothing is
/// updated when a gradient is not finite.
pub fn sgd_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    velocity: &mut NetworkParams,
    cfg: &TrainConfig,
) -> Result<()> {
    let layers = grads.tensor_layers();
    for (t, layer) in grads.tensors().iter().zip(layers) {
        if t.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { layer });
        }
    }
    let (mu, eta, clip) = (cfg.momentum, cfg.learning_rate, cfg.linf_clip);
    for ((w, v), g) in params
        .tensors_mut()
        .into_iter()
        .zip(velocity.tensors_mut())
        .zip(grads.tensors())
    {
        for ((wi, vi), &gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            let g = gi.clamp(-clip, clip);
            *vi = mu * *vi - eta * g;
            if cfg.nesterov {
                *wi += mu * *vi - eta * g;
            } else {
                *wi += *vi;
            }
        }
    }
    Ok(())
}

pub fn error_rate(net: &Network, samples: &[Sample]) -> Result<f64> {
    Ok(evaluate(net, samples)?.0)
}

/// Error rate and mean negative log-likelihood of `samples`.
pub fn evaluate(net: &Network, samples: &[Sample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let scored: Result<Vec<(bool, f64)>> = samples
        .par_iter()
        .map(|s| {
            let p = net.predict(&s.image, s.location)?;
            Ok((argmax(&p) != s.label, -p[s.label].max(NLL_FLOOR).ln()))
        })
        .collect();
    let scored = scored?;
    let n = samples.len() as f64;
    let wrong = scored.iter().filter(|s| s.0).count() as f64;
    Ok((wrong / n, scored.iter().map(|s| s.1).sum::<f64>() / n))
}

/// `m[truth][predicted]` counts.
pub fn confusion_matrix(net: &Network, samples: &[Sample]) -> Result<Vec<Vec<usize>>> {
    let k = net.spec.num_classes;
    let preds: Result<Vec<usize>> = samples
        .par_iter()
        .map(|s| Ok(argmax(&net.predict(&s.image, s.location)?)))
        .collect();
    let mut m = vec![vec![0; k]; k];
    for (s, p) in samples.iter().zip(preds?) {
        m[s.label][p] += 1;
    }
    Ok(m)
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Trains a fresh network on `data.train`, keeping the parameters of the
/// epoch with the lowest validation error.
pub fn train(spec: &NetworkSpec, cfg: &TrainConfig, data: &Dataset) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    train_from(Network::new(spec.clone(), cfg.seed)?, cfg, data)
}

/// Continues training `net` from its current parameters.
pub fn train_from(mut net: Network, cfg: &TrainConfig, data: &Dataset) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    let spec = &net.spec.clone();
    if data.train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if let Some(s) = data.train.iter().chain(&data.valid).find(|s| s.label >= spec.num_classes) {
        return Err(Error::InvalidParameter(format!(
            "label {} outside {} classes",
            s.label, spec.num_classes
        )));
    }
    if spec.use_location {
        let raw: Vec<[f64; 2]> = data.train.iter().map(|s| s.location).collect();
        net.location = standardize_locations(&raw)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut velocity = NetworkParams::zeros(spec);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut report = TrainReport {
        best_valid_err: f64::INFINITY,
        best_valid_loss: f64::INFINITY,
        ..TrainReport::default()
    };
    let mut best = net.params.clone();
    let mut step_cfg = cfg.clone();
    let parallel = rayon::current_num_threads() > 1;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut wrong, mut loss) = (0usize, 0.0);
        for chunk in order.chunks(cfg.minibatch) {
            // inputs and masks are drawn serially so results do not depend
            // on the thread count
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &data.train[i];
                let image = match &cfg.distortion {
                    Some(d) => distort(&s.image, d, &mut rng)?,
                    None => s.image.clone(),
                };
                let input = net.encode(&image)?;
                let mask = dropout_mask(&net, &mut rng);
                batch.push((input, s.location, s.label, mask));
            }
            let run = |(input, loc, _, mask): &(Vec<f64>, [f64; 2], usize, Option<Vec<f64>>)| {
                let mode = match mask {
                    Some(m) => Mode::Mask(m),
                    None => Mode::Infer,
                };
                net.forward_input(input.clone(), *loc, mode)
            };
            let mut grad = NetworkParams::zeros(spec);
            let mut tally = |cache: &ForwardCache, label: usize| {
                loss -= cache.probs[label].max(NLL_FLOOR).ln();
                wrong += (argmax(&cache.probs) != label) as usize;
            };
            if parallel {
                let parts: Result<Vec<(ForwardCache, NetworkParams)>> = batch
                    .par_iter()
                    .map(|b| {
                        let cache = run(b)?;
                        let mut g = NetworkParams::zeros(spec);
                        net.backward(&cache, b.2, &mut g)?;
                        Ok((cache, g))
                    })
                    .collect();
                for ((cache, g), b) in parts?.iter().zip(&batch) {
                    tally(cache, b.2);
                    grad.add_assign(g);
                }
            } else {
                for b in &batch {
                    let cache = run(b)?;
                    tally(&cache, b.2);
                    net.backward(&cache, b.2, &mut grad)?;
                }
            }
            grad.scale(1.0 / chunk.len() as f64);
            sgd_step(&mut net.params, &grad, &mut velocity, &step_cfg)?;
        }
        step_cfg.learning_rate *= cfg.lr_decay;
        let (valid_err, valid_loss) = if data.valid.is_empty() {
            (wrong as f64 / data.train.len() as f64, loss / data.train.len() as f64)
        } else {
            evaluate(&net, &data.valid)?
        };
        let test_err = if data.test.is_empty() {
            None
        } else {
            Some(error_rate(&net, &data.test)?)
        };
        report.epochs.push(EpochStats {
            epoch,
            train_err: wrong as f64 / data.train.len() as f64,
            train_loss: loss / data.train.len() as f64,
            valid_err,
            valid_loss,
            test_err,
        });
        // ties on the error go to the lower validation loss
        let better = valid_err < report.best_valid_err
            || (valid_err == report.best_valid_err && valid_loss < report.best_valid_loss);
        if better {
            report.best_valid_err = valid_err;
            report.best_valid_loss = valid_loss;
            report.best_epoch = epoch;
            best = net.params.clone();
        }
        if let Some(p) = cfg.patience {
            if epoch - report.best_epoch >= p {
                break;
            }
        }
    }
    net.params = best;
    Ok((net, report))
}

fn dropout_mask(net: &Network, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    use rand::Rng;
    let rate = net.spec.dropout;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..net.spec.feature_len())
            .map(|_| if rng.gen_bool(rate) { 0.0 } else { keep })
            .collect(),
    )
}
