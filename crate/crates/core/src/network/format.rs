//! Model file: `VXWM` | version u32 | layer count u32 | alpha f64 | corruption f64 |
//! per layer (fan_in u32, fan_out u32) | per layer W (row-major), b_enc, b_dec as f64.
//! Everything little-endian.

use std::path::Path;

use super::{LayerParams, SiameseModel};
use crate::error::{Error, Result};
use crate::io::{checked_u32, put_f64, put_u32, write_atomic, ByteReader};

pub const MODEL_MAGIC: &[u8; 4] = b"VXWM";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(m: &SiameseModel) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(32 + 8 * m.num_params());
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION);
    put_u32(&mut out, checked_u32(m.layers().len(), "layer count")?);
    put_f64(&mut out, m.alpha);
    put_f64(&mut out, m.corruption);
    for l in m.layers() {
        put_u32(&mut out, checked_u32(l.fan_in(), "fan_in")?);
        put_u32(&mut out, checked_u32(l.fan_out(), "fan_out")?);
    }
    for l in m.layers() {
        for &p in l.params() {
            put_f64(&mut out, p);
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<SiameseModel> {
    let mut r = ByteReader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let count_offset = r.position();
    let count = r.u32()? as usize;
    // Each layer needs at least its 8-byte shape record.
    if count == 0 || count > r.remaining() / 8 {
        return Err(Error::MalformedHeader {
            offset: count_offset,
            reason: format!("implausible layer count {count}"),
        });
    }
    let alpha = r.f64()?;
    let corruption = r.f64()?;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let offset = r.position();
        let fan_in = r.u32()? as usize;
        let fan_out = r.u32()? as usize;
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::MalformedHeader {
                offset,
                reason: format!("zero layer dimension {fan_in}x{fan_out}"),
            });
        }
        shapes.push((offset, fan_in, fan_out));
    }
    let mut layers = Vec::with_capacity(count);
    for (offset, fan_in, fan_out) in shapes {
        let n = fan_in
            .checked_mul(fan_out)
            .and_then(|w| w.checked_add(fan_in + fan_out))
            .filter(|&n| n <= r.remaining() / 8)
            .ok_or(Error::Truncated {
                offset: r.position(),
                needed: fan_in.saturating_mul(fan_out).saturating_mul(8),
                available: r.remaining(),
            })?;
        let mut read = |k: usize| -> Result<Vec<f64>> { (0..k).map(|_| r.f64()).collect() };
        let weights = read(fan_in * fan_out)?;
        let enc_bias = read(fan_out)?;
        let dec_bias = read(fan_in)?;
        debug_assert_eq!(weights.len() + enc_bias.len() + dec_bias.len(), n);
        let layer =
            LayerParams::from_parts(fan_in, fan_out, weights, enc_bias, dec_bias).map_err(|e| {
                Error::MalformedHeader {
                    offset,
                    reason: e.to_string(),
                }
            })?;
        layers.push(layer);
    }
    r.finish()?;
    SiameseModel::new(layers, alpha, corruption)
}

pub fn save_model(m: &SiameseModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(m)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SiameseModel> {
    decode_model(&std::fs::read(path)?)
}
