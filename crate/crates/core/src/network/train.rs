//! Greedy layer-wise pretraining and siamese fine-tuning by mini-batch SGD.
//!
//! Every random draw (initialization, shuffling, corruption masks) comes from
//! a generator keyed by the configured seed, so a run is a pure function of
//! its data, configuration and seed.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{accumulate_pair_grad, accumulate_reconstruction_grad, zero_grads};
use super::{LayerParams, SiameseModel, DEFAULT_ALPHA, DEFAULT_FINETUNE_CORRUPTION};
use crate::error::{Error, Result};
use crate::volume::{corrupt_with, corruption_rng, PairBatch};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl SgdConfig {
    pub fn pretrain_default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 10,
            seed: 0,
        }
    }

    pub fn finetune_default() -> Self {
        Self {
            learning_rate: 0.01,
            ..Self::pretrain_default()
        }
    }

    /// Configuration used for layer `k` of a greedily pretrained stack. Layer 0
    /// uses the seed unchanged.
    pub fn for_layer(&self, k: usize) -> Self {
        Self {
            seed: if k == 0 {
                self.seed
            } else {
                mix(self.seed, 0x4c41_5945 + k as u64)
            },
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One line of training progress.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Only defined for siamese fine-tuning.
    pub mean_cosine: Option<f64>,
    /// Squared reconstruction error per input element, averaged over examples.
    pub mean_recon_mse: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} loss={:.6}", self.epoch, self.mean_loss)?;
        match self.mean_cosine {
            Some(c) => write!(f, " cosine={c:.6}")?,
            None => write!(f, " cosine=-")?,
        }
        write!(f, " recon_mse={:.6}", self.mean_recon_mse)
    }
}

/// Result of greedy pretraining: the initial shared model and the per-layer
/// training curves.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub model: SiameseModel,
    pub history: Vec<Vec<EpochRecord>>,
}

const TAG_INIT: u64 = 1;
const TAG_CORRUPT: u64 = 2;

/// SplitMix64 finalizer over `seed ^ tag`.
fn mix(seed: u64, tag: u64) -> u64 {
    let mut z =
        (seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sgd_step(layers: &mut [LayerParams], grads: &[LayerParams], scale: f64) {
    for (layer, grad) in layers.iter_mut().zip(grads) {
        for (p, g) in layer.params_mut().zip(grad.params()) {
            *p -= scale * g;
        }
    }
}

fn reset(grads: &mut [LayerParams]) {
    for g in grads {
        for p in g.params_mut() {
            *p = 0.0;
        }
    }
}

fn check_inputs(inputs: &[Vec<f64>]) -> Result<usize> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "zero-length training vectors".into(),
        ));
    }
    if let Some(bad) = inputs.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    Ok(dim)
}

/// Trains one tied-weight denoising autoencoder `dim -> fan_out` to reconstruct
/// each clean input from a masked copy (masks re-drawn on every presentation).
pub fn pretrain_layer(
    inputs: &[Vec<f64>],
    fan_out: usize,
    rate: f64,
    sgd: SgdConfig,
) -> Result<(LayerParams, Vec<EpochRecord>)> {
    let dim = check_inputs(inputs)?;
    sgd.validate()?;
    if fan_out == 0 {
        return Err(Error::InvalidArgument(
            "layer width must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(sgd.seed, TAG_INIT));
    let mut layers = vec![LayerParams::glorot(dim, fan_out, &mut rng)];
    let mut grads = zero_grads(&layers);
    let corrupt_key = mix(sgd.seed, TAG_CORRUPT);
    let n = inputs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(sgd.epochs);

    for epoch in 0..sgd.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(sgd.batch_size) {
            reset(&mut grads);
            for &i in batch {
                let mut crng = corruption_rng(corrupt_key, (epoch * n + i) as u64);
                let xt = corrupt_with(&inputs[i], rate, &mut crng);
                total += accumulate_reconstruction_grad(&layers, &inputs[i], &xt, &mut grads)?;
            }
            sgd_step(&mut layers, &grads, sgd.learning_rate / batch.len() as f64);
        }
        let mean = total / n as f64;
        history.push(EpochRecord {
            epoch: epoch + 1,
            mean_loss: mean,
            mean_cosine: None,
            mean_recon_mse: mean / dim as f64,
        });
    }
    Ok((layers.pop().unwrap(), history))
}

/// Greedy layer-wise pretraining: layer `k` is trained on the clean codes of
/// layers `< k`. The resulting stack initializes the single shared model.
pub fn pretrain_stack(
    inputs: &[Vec<f64>],
    widths: &[usize],
    rates: &[f64],
    sgd: SgdConfig,
) -> Result<Pretrained> {
    if widths.is_empty() {
        return Err(Error::EmptyStack);
    }
    if widths.len() != rates.len() {
        return Err(Error::InvalidArgument(format!(
            "{} layer widths but {} corruption rates",
            widths.len(),
            rates.len()
        )));
    }
    check_inputs(inputs)?;
    let mut layers = Vec::with_capacity(widths.len());
    let mut history = Vec::with_capacity(widths.len());
    let mut codes: Option<Vec<Vec<f64>>> = None;
    for (k, (&width, &rate)) in widths.iter().zip(rates).enumerate() {
        let current = codes.as_deref().unwrap_or(inputs);
        let (layer, curve) = pretrain_layer(current, width, rate, sgd.for_layer(k))?;
        if k + 1 < widths.len() {
            let mut out = Vec::new();
            codes = Some(
                current
                    .iter()
                    .map(|x| {
                        layer.encode_into(x, &mut out);
                        out.clone()
                    })
                    .collect(),
            );
        }
        layers.push(layer);
        history.push(curve);
    }
    Ok(Pretrained {
        model: SiameseModel::new(layers, DEFAULT_ALPHA, DEFAULT_FINETUNE_CORRUPTION)?,
        history,
    })
}

/// Siamese fine-tuning: SGD on the pair loss, where each shared parameter
/// moves by the sum of both branches' gradients.
pub fn finetune(
    m: &SiameseModel,
    pairs: &PairBatch,
    alpha: f64,
    rate: f64,
    sgd: SgdConfig,
) -> Result<(SiameseModel, Vec<EpochRecord>)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    sgd.validate()?;
    let mut model = SiameseModel::new(m.layers().to_vec(), alpha, rate)?;
    let dim = model.input_dim();
    let mut grads = zero_grads(model.layers());
    let mut rng = ChaCha8Rng::seed_from_u64(mix(sgd.seed, TAG_INIT));
    let corrupt_key = mix(sgd.seed, TAG_CORRUPT);
    let n = pairs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(sgd.epochs);

    for epoch in 0..sgd.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut cos, mut recon) = (0.0, 0.0, 0.0);
        for batch in order.chunks(sgd.batch_size) {
            reset(&mut grads);
            for &i in batch {
                let pair = &pairs.pairs[i];
                let id = 2 * (epoch * n + i) as u64;
                let xt1 = corrupt_with(
                    &pair.first.values,
                    rate,
                    &mut corruption_rng(corrupt_key, id),
                );
                let xt2 = corrupt_with(
                    &pair.second.values,
                    rate,
                    &mut corruption_rng(corrupt_key, id + 1),
                );
                let l = accumulate_pair_grad(
                    &model,
                    &pair.first.values,
                    &pair.second.values,
                    &xt1,
                    &xt2,
                    &mut grads,
                )?;
                loss += l.loss;
                cos += l.cosine;
                recon += l.recon[0] + l.recon[1];
            }
            sgd_step(
                model.layers_mut(),
                &grads,
                sgd.learning_rate / batch.len() as f64,
            );
        }
        history.push(EpochRecord {
            epoch: epoch + 1,
            mean_loss: loss / n as f64,
            mean_cosine: Some(cos / n as f64),
            mean_recon_mse: recon / (2 * n * dim) as f64,
        });
    }
    Ok((model, history))
}
