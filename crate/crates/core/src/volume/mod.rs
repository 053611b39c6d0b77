//! Aligned 3D volumes, their binary container, and patch/pair extraction.
//!
//! All volumes in a cohort are assumed to live on one shared voxel grid, so a
//! voxel index identifies the same location in every subject.

mod format;
mod pairs;
mod patches;

pub use format::{
    decode_labels, decode_volume, encode_labels, encode_volume, load_labels, load_volume,
    save_labels, save_volume, LABEL_MAGIC, VOLUME_MAGIC,
};
pub use pairs::{corrupt, corrupt_with, corruption_rng, sample_pairs, PairBatch, PatchPair};
pub use patches::{extract_patches, Patch};

use crate::error::{Error, Result};

/// Voxel counts along x, y and z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index with x varying fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn voxel_index(&self, v: Voxel) -> usize {
        self.index(v.x, v.y, v.z)
    }

    #[inline]
    pub fn voxel(&self, index: usize) -> Voxel {
        let x = index % self.nx;
        let y = (index / self.nx) % self.ny;
        let z = index / (self.nx * self.ny);
        Voxel::new(x, y, z)
    }

    pub fn contains(&self, v: Voxel) -> bool {
        v.x < self.nx && v.y < self.ny && v.z < self.nz
    }
}

/// A voxel coordinate. Ordering is lexicographic by (z, y, x), which is the
/// scan order of the x-fastest layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Voxel {
    pub z: usize,
    pub y: usize,
    pub x: usize,
}

impl Voxel {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Self { z, y, x }
    }
}

impl std::fmt::Display for Voxel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Scalar intensity grid with an inclusion mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f32>,
    mask: Vec<bool>,
}

impl Volume {
    pub fn new(dims: Dims, data: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                found: data.len(),
            });
        }
        if mask.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                found: mask.len(),
            });
        }
        Ok(Self { dims, data, mask })
    }

    /// Builds a volume whose mask is every strictly positive voxel.
    pub fn with_default_mask(dims: Dims, data: Vec<f32>) -> Result<Self> {
        let mask = data.iter().map(|&v| v > 0.0).collect();
        Self::new(dims, data, mask)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn is_masked(&self, v: Voxel) -> bool {
        self.mask[self.dims.voxel_index(v)]
    }

    /// Min-max rescales the masked intensities onto [0, 1] and zeroes the rest.
    pub fn rescale_unit(&self) -> Result<Volume> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut any = false;
        for (&v, &m) in self.data.iter().zip(&self.mask) {
            if m {
                if !v.is_finite() {
                    return Err(Error::NonFinite);
                }
                any = true;
                lo = lo.min(v as f64);
                hi = hi.max(v as f64);
            }
        }
        if !any {
            return Err(Error::EmptyMask);
        }
        if hi <= lo {
            return Err(Error::DegenerateRange(lo));
        }
        let span = hi - lo;
        let data = self
            .data
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| {
                if m {
                    (((v as f64 - lo) / span) as f32).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Volume {
            dims: self.dims,
            data,
            mask: self.mask.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f32]) -> Volume {
        Volume::new(
            Dims::new(values.len(), 1, 1),
            values.to_vec(),
            vec![true; values.len()],
        )
        .unwrap()
    }

    #[test]
    fn rescale_maps_extremes_to_unit_interval() {
        let v = line(&[2.0, 4.0, 6.0]).rescale_unit().unwrap();
        assert_eq!(v.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn rescale_is_identity_on_unit_extremes() {
        let v = line(&[0.0, 1.0]).rescale_unit().unwrap();
        assert_eq!(v.data(), &[0.0, 1.0]);
    }

    #[test]
    fn rescale_rejects_constant_region() {
        let err = line(&[3.0, 3.0, 3.0]).rescale_unit().unwrap_err();
        assert!(matches!(err, Error::DegenerateRange(_)));
    }

    #[test]
    fn rescale_zeroes_unmasked_and_ignores_them_for_range() {
        let v = Volume::new(
            Dims::new(4, 1, 1),
            vec![100.0, 2.0, 4.0, -7.0],
            vec![false, true, true, false],
        )
        .unwrap();
        let r = v.rescale_unit().unwrap();
        assert_eq!(r.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn rescale_needs_a_masked_voxel() {
        let v = Volume::new(Dims::new(2, 1, 1), vec![1.0, 2.0], vec![false; 2]).unwrap();
        assert!(matches!(v.rescale_unit(), Err(Error::EmptyMask)));
    }

    #[test]
    fn default_mask_is_strictly_positive_voxels() {
        let v = Volume::with_default_mask(Dims::new(3, 1, 1), vec![0.0, 0.5, -1.0]).unwrap();
        assert_eq!(v.mask(), &[false, true, false]);
    }

    #[test]
    fn voxel_order_is_scan_order() {
        let d = Dims::new(3, 4, 5);
        let mut voxels: Vec<Voxel> = (0..d.len()).map(|i| d.voxel(i)).collect();
        let scan = voxels.clone();
        voxels.sort();
        assert_eq!(voxels, scan);
        for (i, v) in scan.iter().enumerate() {
            assert_eq!(d.voxel_index(*v), i);
        }
    }
}
