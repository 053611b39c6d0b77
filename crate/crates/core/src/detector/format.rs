//! Bank file, little-endian:
//!
//! ```text
//! VXWB | version u32 | nu f64 | feature_dim u32 | center count u32 |
//!   per center (sorted by z, y, x): x u32 | y u32 | z u32 | gamma f64 | rho f64 |
//!     support count u32 | per support vector: alpha f64, feature_dim x f64
//! ```

use std::path::Path;

use super::{BankEntry, ClassifierBank};
use crate::error::{Error, Result};
use crate::io::{checked_u32, put_f64, put_u32, write_atomic, ByteReader};
use crate::ocsvm::{KernelConfig, OcSvmModel};
use crate::volume::Voxel;

pub const BANK_MAGIC: &[u8; 4] = b"VXWB";
pub const BANK_VERSION: u32 = 1;

pub fn encode_bank(bank: &ClassifierBank) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(BANK_MAGIC);
    put_u32(&mut out, BANK_VERSION);
    put_f64(&mut out, bank.nu());
    put_u32(
        &mut out,
        checked_u32(bank.feature_dim(), "feature dimension")?,
    );
    put_u32(&mut out, checked_u32(bank.len(), "center count")?);
    for e in bank.entries() {
        for c in [e.center.x, e.center.y, e.center.z] {
            put_u32(&mut out, checked_u32(c, "center coordinate")?);
        }
        put_f64(&mut out, e.model.kernel.gamma);
        put_f64(&mut out, e.model.rho);
        put_u32(
            &mut out,
            checked_u32(e.model.alphas.len(), "support count")?,
        );
        for (a, sv) in e.model.alphas.iter().zip(&e.model.support_vectors) {
            put_f64(&mut out, *a);
            for &v in sv {
                put_f64(&mut out, v);
            }
        }
    }
    Ok(out)
}

pub fn decode_bank(bytes: &[u8]) -> Result<ClassifierBank> {
    let mut r = ByteReader::new(bytes);
    r.magic(BANK_MAGIC)?;
    let version = r.u32()?;
    if version != BANK_VERSION {
        return Err(Error::Version {
            found: version,
            expected: BANK_VERSION,
        });
    }
    let nu = r.f64()?;
    let feature_dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(r.remaining() / 36));
    let mut previous: Option<Voxel> = None;
    for _ in 0..count {
        let offset = r.position();
        let (x, y, z) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let center = Voxel::new(x, y, z);
        if previous.is_some_and(|p| p >= center) {
            return Err(Error::MalformedHeader {
                offset,
                reason: format!("center {center} out of canonical order"),
            });
        }
        previous = Some(center);
        let gamma_offset = r.position();
        let kernel = KernelConfig::new(r.f64()?).map_err(|e| Error::MalformedHeader {
            offset: gamma_offset,
            reason: e.to_string(),
        })?;
        let rho = r.f64()?;
        let n_sv = r.u32()? as usize;
        let record = 8 * (feature_dim + 1);
        if n_sv > r.remaining() / record.max(1) {
            return Err(Error::Truncated {
                offset: r.position(),
                needed: n_sv.saturating_mul(record),
                available: r.remaining(),
            });
        }
        let mut alphas = Vec::with_capacity(n_sv);
        let mut support_vectors = Vec::with_capacity(n_sv);
        for _ in 0..n_sv {
            alphas.push(r.f64()?);
            support_vectors.push(
                (0..feature_dim)
                    .map(|_| r.f64())
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        entries.push(BankEntry {
            center,
            model: OcSvmModel {
                support_vectors,
                alphas,
                rho,
                kernel,
                nu,
            },
        });
    }
    r.finish()?;
    ClassifierBank::new(nu, feature_dim, entries)
}

pub fn save_bank(bank: &ClassifierBank, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_bank(bank)?)
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<ClassifierBank> {
    decode_bank(&std::fs::read(path)?)
}
