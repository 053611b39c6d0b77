//! Tied-weight stacked denoising autoencoder used as both branches of the
//! siamese network.
//!
//! Encoder layer `k` computes `h_k = sigmoid(W_k h_{k-1} + b_enc_k)`; the decoder
//! mirrors it with the transposed matrix, `d_{k-1} = sigmoid(W_k^T d_k + b_dec_k)`,
//! starting from the code `d_K = h_K`. There is exactly one parameter set: the
//! two siamese branches are two evaluations of the same [`SiameseModel`].

mod format;
mod loss;
mod train;

pub use format::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use loss::{pair_loss, pair_loss_grad, reconstruction_loss_grad, PairLoss, COSINE_EPS};
pub use train::{finetune, pretrain_layer, pretrain_stack, EpochRecord, Pretrained, SgdConfig};

use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.66;
pub const DEFAULT_FINETUNE_CORRUPTION: f64 = 0.1;

/// Middle-layer representation of a patch.
pub type Representation = Vec<f64>;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One autoencoder layer. The decoder reuses `weights` transposed.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    fan_in: usize,
    fan_out: usize,
    /// `fan_out x fan_in`, row-major.
    pub weights: Vec<f64>,
    pub enc_bias: Vec<f64>,
    pub dec_bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            enc_bias: vec![0.0; fan_out],
            dec_bias: vec![0.0; fan_in],
        }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut layer = Self::zeros(fan_in, fan_out);
        for w in &mut layer.weights {
            *w = rng.random_range(-limit..limit);
        }
        layer
    }

    pub fn from_parts(
        fan_in: usize,
        fan_out: usize,
        weights: Vec<f64>,
        enc_bias: Vec<f64>,
        dec_bias: Vec<f64>,
    ) -> Result<Self> {
        for (len, expected) in [
            (weights.len(), fan_in * fan_out),
            (enc_bias.len(), fan_out),
            (dec_bias.len(), fan_in),
        ] {
            if len != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: len,
                });
            }
        }
        Ok(Self {
            fan_in,
            fan_out,
            weights,
            enc_bias,
            dec_bias,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.enc_bias.len() + self.dec_bias.len()
    }

    pub fn encode_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.fan_in)
                .zip(&self.enc_bias)
                .map(|(row, b)| {
                    let s: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
                    sigmoid(s + b)
                }),
        );
    }

    pub fn decode_into(&self, code: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.dec_bias);
        for (row, &c) in self.weights.chunks_exact(self.fan_in).zip(code) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * c;
            }
        }
        for o in out.iter_mut() {
            *o = sigmoid(*o);
        }
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .chain(self.enc_bias.iter_mut())
            .chain(self.dec_bias.iter_mut())
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .chain(&self.enc_bias)
            .chain(&self.dec_bias)
    }

    fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }
}

/// Shared parameters of both siamese branches plus the loss tradeoff `alpha`
/// and the fine-tuning corruption rate.
#[derive(Clone, Debug, PartialEq)]
pub struct SiameseModel {
    layers: Vec<LayerParams>,
    pub alpha: f64,
    pub corruption: f64,
}

impl SiameseModel {
    pub fn new(layers: Vec<LayerParams>, alpha: f64, corruption: f64) -> Result<Self> {
        check_chain(&layers)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha {alpha} outside [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&corruption) {
            return Err(Error::InvalidArgument(format!(
                "corruption rate {corruption} outside [0, 1]"
            )));
        }
        if !layers.iter().all(LayerParams::is_finite) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            layers,
            alpha,
            corruption,
        })
    }

    /// Glorot-initialized stack over `input_dim -> widths[0] -> ...`.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        widths: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut fan_in = input_dim;
        let mut layers = Vec::with_capacity(widths.len());
        for &w in widths {
            layers.push(LayerParams::glorot(fan_in, w, rng));
            fan_in = w;
        }
        Self::new(layers, DEFAULT_ALPHA, DEFAULT_FINETUNE_CORRUPTION)
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn code_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerParams::num_params).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Middle-layer representation `g(x)`.
    pub fn encode(&self, x: &[f64]) -> Result<Representation> {
        self.check_input(x)?;
        Ok(encode_layers(&self.layers, x))
    }

    /// Full encode-decode pass, `x_hat`.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(reconstruct_layers(&self.layers, x))
    }
}

pub(crate) fn check_chain(layers: &[LayerParams]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::EmptyStack);
    }
    for pair in layers.windows(2) {
        if pair[0].fan_out != pair[1].fan_in {
            return Err(Error::DimensionMismatch {
                expected: pair[0].fan_out,
                found: pair[1].fan_in,
            });
        }
    }
    Ok(())
}

pub(crate) fn encode_layers(layers: &[LayerParams], x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    for layer in layers {
        layer.encode_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

pub(crate) fn reconstruct_layers(layers: &[LayerParams], x: &[f64]) -> Vec<f64> {
    let mut cur = encode_layers(layers, x);
    let mut next = Vec::new();
    for layer in layers.iter().rev() {
        layer.decode_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}
