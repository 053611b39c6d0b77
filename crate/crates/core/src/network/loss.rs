//! Pair loss and its closed-form gradient.
//!
//! For a pair of clean patches `x1, x2` and their corrupted versions `xt1, xt2`:
//!
//! ```text
//! L = alpha * (|x1 - x_hat1|^2 + |x2 - x_hat2|^2) - (1 - alpha) * cos(g(xt1), g(xt2))
//! ```
//!
//! where `x_hat_t` reconstructs `xt_t` and `g` is the middle-layer code. Both
//! branches share one parameter set, so the gradient is the sum of the two
//! branch contributions.

use super::{check_chain, LayerParams, SiameseModel};
use crate::error::{Error, Result};

/// Norm below which a representation makes the cosine undefined.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairLoss {
    pub loss: f64,
    pub cosine: f64,
    /// Squared reconstruction error of each branch.
    pub recon: [f64; 2],
}

/// Activations of one forward pass: `enc[k] = h_k` for k = 0..=K and
/// `dec[k] = d_k`, with `dec[K] == enc[K]`.
struct Trace {
    enc: Vec<Vec<f64>>,
    dec: Vec<Vec<f64>>,
}

impl Trace {
    fn run(layers: &[LayerParams], x: &[f64]) -> Self {
        let mut enc = Vec::with_capacity(layers.len() + 1);
        enc.push(x.to_vec());
        for layer in layers {
            let mut out = Vec::with_capacity(layer.fan_out());
            layer.encode_into(enc.last().unwrap(), &mut out);
            enc.push(out);
        }
        let mut dec = vec![Vec::new(); layers.len() + 1];
        dec[layers.len()] = enc[layers.len()].clone();
        for k in (1..=layers.len()).rev() {
            let mut out = Vec::with_capacity(layers[k - 1].fan_in());
            layers[k - 1].decode_into(&dec[k], &mut out);
            dec[k - 1] = out;
        }
        Self { enc, dec }
    }

    fn code(&self) -> &[f64] {
        self.enc.last().unwrap()
    }

    fn output(&self) -> &[f64] {
        &self.dec[0]
    }
}

fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(u: &[f64], v: &[f64]) -> Result<(f64, f64, f64)> {
    let (nu, nv) = (norm(u), norm(v));
    for n in [nu, nv] {
        if n < COSINE_EPS {
            return Err(Error::DegenerateCosine { norm: n });
        }
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv), nu, nv))
}

/// d cos(u, v) / du.
fn cosine_grad(u: &[f64], v: &[f64], c: f64, nu: f64, nv: f64) -> Vec<f64> {
    u.iter()
        .zip(v)
        .map(|(a, b)| b / (nu * nv) - c * a / (nu * nu))
        .collect()
}

pub(crate) fn zero_grads(layers: &[LayerParams]) -> Vec<LayerParams> {
    layers
        .iter()
        .map(|l| LayerParams::zeros(l.fan_in(), l.fan_out()))
        .collect()
}

/// Backpropagates `recon_weight * |target - x_hat|^2` plus an externally
/// supplied gradient at the code layer, accumulating into `grads`.
fn backward(
    layers: &[LayerParams],
    trace: &Trace,
    target: &[f64],
    recon_weight: f64,
    code_grad: Option<&[f64]>,
    grads: &mut [LayerParams],
) {
    let depth = layers.len();
    let mut g: Vec<f64> = trace
        .output()
        .iter()
        .zip(target)
        .map(|(d, x)| recon_weight * 2.0 * (d - x))
        .collect();

    // Decoder: layer k-1 maps d_k to d_{k-1} through W^T.
    for k in 1..=depth {
        let layer = &layers[k - 1];
        let grad = &mut grads[k - 1];
        let out = &trace.dec[k - 1];
        let input = &trace.dec[k];
        let delta: Vec<f64> = g.iter().zip(out).map(|(g, o)| g * o * (1.0 - o)).collect();
        for (b, d) in grad.dec_bias.iter_mut().zip(&delta) {
            *b += d;
        }
        let fan_in = layer.fan_in();
        let mut next = vec![0.0; layer.fan_out()];
        for (j, (w_row, gw_row)) in layer
            .weights
            .chunks_exact(fan_in)
            .zip(grad.weights.chunks_exact_mut(fan_in))
            .enumerate()
        {
            let a = input[j];
            let mut s = 0.0;
            for ((w, gw), d) in w_row.iter().zip(gw_row.iter_mut()).zip(&delta) {
                *gw += a * d;
                s += w * d;
            }
            next[j] = s;
        }
        g = next;
    }

    if let Some(extra) = code_grad {
        for (g, e) in g.iter_mut().zip(extra) {
            *g += e;
        }
    }

    // Encoder: layer k-1 maps h_{k-1} to h_k through W.
    for k in (1..=depth).rev() {
        let layer = &layers[k - 1];
        let grad = &mut grads[k - 1];
        let out = &trace.enc[k];
        let input = &trace.enc[k - 1];
        let fan_in = layer.fan_in();
        let mut next = vec![0.0; fan_in];
        for (j, (w_row, gw_row)) in layer
            .weights
            .chunks_exact(fan_in)
            .zip(grad.weights.chunks_exact_mut(fan_in))
            .enumerate()
        {
            let d = g[j] * out[j] * (1.0 - out[j]);
            grad.enc_bias[j] += d;
            for (((w, gw), a), n) in w_row
                .iter()
                .zip(gw_row.iter_mut())
                .zip(input)
                .zip(next.iter_mut())
            {
                *gw += d * a;
                *n += w * d;
            }
        }
        g = next;
    }
}

fn check_inputs(m: &SiameseModel, inputs: [&[f64]; 4]) -> Result<()> {
    for x in inputs {
        if x.len() != m.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: m.input_dim(),
                found: x.len(),
            });
        }
    }
    Ok(())
}

pub fn pair_loss(
    m: &SiameseModel,
    x1: &[f64],
    x2: &[f64],
    xt1: &[f64],
    xt2: &[f64],
) -> Result<PairLoss> {
    check_inputs(m, [x1, x2, xt1, xt2])?;
    let t1 = Trace::run(m.layers(), xt1);
    let t2 = Trace::run(m.layers(), xt2);
    let (c, _, _) = cosine(t1.code(), t2.code())?;
    let recon = [
        squared_error(x1, t1.output()),
        squared_error(x2, t2.output()),
    ];
    Ok(PairLoss {
        loss: m.alpha * (recon[0] + recon[1]) - (1.0 - m.alpha) * c,
        cosine: c,
        recon,
    })
}

/// Loss and gradient with respect to every parameter, shaped like the model's layers.
pub fn pair_loss_grad(
    m: &SiameseModel,
    x1: &[f64],
    x2: &[f64],
    xt1: &[f64],
    xt2: &[f64],
) -> Result<(PairLoss, Vec<LayerParams>)> {
    let mut grads = zero_grads(m.layers());
    let loss = accumulate_pair_grad(m, x1, x2, xt1, xt2, &mut grads)?;
    Ok((loss, grads))
}

pub(crate) fn accumulate_pair_grad(
    m: &SiameseModel,
    x1: &[f64],
    x2: &[f64],
    xt1: &[f64],
    xt2: &[f64],
    grads: &mut [LayerParams],
) -> Result<PairLoss> {
    check_inputs(m, [x1, x2, xt1, xt2])?;
    let layers = m.layers();
    let t1 = Trace::run(layers, xt1);
    let t2 = Trace::run(layers, xt2);
    let (c, n1, n2) = cosine(t1.code(), t2.code())?;
    let scale = -(1.0 - m.alpha);
    let g1: Vec<f64> = cosine_grad(t1.code(), t2.code(), c, n1, n2)
        .into_iter()
        .map(|g| scale * g)
        .collect();
    let g2: Vec<f64> = cosine_grad(t2.code(), t1.code(), c, n2, n1)
        .into_iter()
        .map(|g| scale * g)
        .collect();
    backward(layers, &t1, x1, m.alpha, Some(&g1), grads);
    backward(layers, &t2, x2, m.alpha, Some(&g2), grads);
    let recon = [
        squared_error(x1, t1.output()),
        squared_error(x2, t2.output()),
    ];
    Ok(PairLoss {
        loss: m.alpha * (recon[0] + recon[1]) - (1.0 - m.alpha) * c,
        cosine: c,
        recon,
    })
}

/// Denoising reconstruction loss `|x - x_hat(xt)|^2` of a plain (non-siamese)
/// stack and its gradient.
pub fn reconstruction_loss_grad(
    layers: &[LayerParams],
    x: &[f64],
    xt: &[f64],
) -> Result<(f64, Vec<LayerParams>)> {
    let mut grads = zero_grads(layers);
    let loss = accumulate_reconstruction_grad(layers, x, xt, &mut grads)?;
    Ok((loss, grads))
}

pub(crate) fn accumulate_reconstruction_grad(
    layers: &[LayerParams],
    x: &[f64],
    xt: &[f64],
    grads: &mut [LayerParams],
) -> Result<f64> {
    check_chain(layers)?;
    let dim = layers[0].fan_in();
    for v in [x, xt] {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    let trace = Trace::run(layers, xt);
    backward(layers, &trace, x, 1.0, None, grads);
    Ok(squared_error(x, trace.output()))
}
