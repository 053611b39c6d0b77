//! Binary volume container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic[4] | nx u32 | ny u32 | nz u32 | mask flag u8 | payload (nx*ny*nz x 4 bytes) | [mask (nx*ny*nz x u8)]
//! ```
//!
//! `VXW1` carries float32 intensities (volumes and distance maps); `VXWC`
//! carries int32 labels (cluster maps and truth grids).

use std::path::Path;

use super::{Dims, Volume};
use crate::error::{Error, Result};
use crate::io::{checked_u32, put_u32, write_atomic, ByteReader};

pub const VOLUME_MAGIC: &[u8; 4] = b"VXW1";
pub const LABEL_MAGIC: &[u8; 4] = b"VXWC";

const HEADER_LEN: usize = 17;

fn put_header(out: &mut Vec<u8>, magic: &[u8; 4], dims: Dims, has_mask: bool) -> Result<()> {
    out.extend_from_slice(magic);
    put_u32(out, checked_u32(dims.nx, "nx")?);
    put_u32(out, checked_u32(dims.ny, "ny")?);
    put_u32(out, checked_u32(dims.nz, "nz")?);
    out.push(has_mask as u8);
    Ok(())
}

fn read_header(r: &mut ByteReader<'_>, magic: &[u8; 4]) -> Result<(Dims, bool)> {
    r.magic(magic)?;
    let dims_offset = r.position();
    let nx = r.u32()? as u64;
    let ny = r.u32()? as u64;
    let nz = r.u32()? as u64;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::MalformedHeader {
            offset: dims_offset,
            reason: format!("zero dimension in {nx}x{ny}x{nz}"),
        });
    }
    // Payload is 4 bytes per voxel plus an optional mask byte; both must be addressable.
    let fits = nx
        .checked_mul(ny)
        .and_then(|n| n.checked_mul(nz))
        .and_then(|n| n.checked_mul(5))
        .filter(|&bytes| usize::try_from(bytes).is_ok());
    if fits.is_none() {
        return Err(Error::DimensionOverflow {
            offset: dims_offset,
            nx,
            ny,
            nz,
        });
    }
    let flag_offset = r.position();
    let has_mask = match r.u8()? {
        0 => false,
        1 => true,
        other => {
            return Err(Error::MalformedHeader {
                offset: flag_offset,
                reason: format!("mask flag must be 0 or 1, found {other}"),
            })
        }
    };
    Ok((Dims::new(nx as usize, ny as usize, nz as usize), has_mask))
}

fn read_mask(r: &mut ByteReader<'_>, n: usize) -> Result<Vec<bool>> {
    let offset = r.position();
    let bytes = r.take(n)?;
    bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::MalformedHeader {
                offset: offset + i,
                reason: format!("mask byte must be 0 or 1, found {other}"),
            }),
        })
        .collect()
}

/// Serializes a volume. The mask is always written, so decoding restores it exactly.
pub fn encode_volume(v: &Volume) -> Result<Vec<u8>> {
    let n = v.dims().len();
    let mut out = Vec::with_capacity(HEADER_LEN + 5 * n);
    put_header(&mut out, VOLUME_MAGIC, v.dims(), true)?;
    for &x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend(v.mask().iter().map(|&m| m as u8));
    Ok(out)
}

/// Parses a `VXW1` container. Without a stored mask, the mask defaults to the
/// strictly positive voxels.
pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    let mut r = ByteReader::new(bytes);
    let (dims, has_mask) = read_header(&mut r, VOLUME_MAGIC)?;
    let n = dims.len();
    let data: Vec<f32> = r
        .take(4 * n)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let volume = if has_mask {
        let mask = read_mask(&mut r, n)?;
        Volume::new(dims, data, mask)?
    } else {
        Volume::with_default_mask(dims, data)?
    };
    r.finish()?;
    Ok(volume)
}

pub fn encode_labels(dims: Dims, labels: &[i32]) -> Result<Vec<u8>> {
    if labels.len() != dims.len() {
        return Err(Error::DimensionMismatch {
            expected: dims.len(),
            found: labels.len(),
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * labels.len());
    put_header(&mut out, LABEL_MAGIC, dims, false)?;
    for &l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_labels(bytes: &[u8]) -> Result<(Dims, Vec<i32>)> {
    let mut r = ByteReader::new(bytes);
    let (dims, has_mask) = read_header(&mut r, LABEL_MAGIC)?;
    let n = dims.len();
    let labels = r
        .take(4 * n)?
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if has_mask {
        // Label grids carry no mask of their own; tolerate and discard one.
        read_mask(&mut r, n)?;
    }
    r.finish()?;
    Ok((dims, labels))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    decode_volume(&std::fs::read(path)?)
}

pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_volume(v)?)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<(Dims, Vec<i32>)> {
    decode_labels(&std::fs::read(path)?)
}

pub fn save_labels(dims: Dims, labels: &[i32], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_labels(dims, labels)?)
}
