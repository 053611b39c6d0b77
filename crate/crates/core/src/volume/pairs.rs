use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Patch, Voxel};
use crate::error::{Error, Result};

/// Two patches centered on the same voxel, taken from different subjects.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub subjects: (usize, usize),
    pub first: Patch,
    pub second: Patch,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairBatch {
    pub pairs: Vec<PatchPair>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Draws `n_pairs` similar pairs with replacement: a center uniformly among
/// those held by at least two subjects, then an ordered pair of distinct
/// subjects uniformly among the holders of that center.
pub fn sample_pairs(
    subject_patches: &[Vec<Patch>],
    n_pairs: usize,
    seed: u64,
) -> Result<PairBatch> {
    let mut holders: BTreeMap<Voxel, Vec<(usize, usize)>> = BTreeMap::new();
    for (subject, patches) in subject_patches.iter().enumerate() {
        for (i, p) in patches.iter().enumerate() {
            let entry = holders.entry(p.center).or_default();
            if entry.last().map(|&(s, _)| s) != Some(subject) {
                entry.push((subject, i));
            }
        }
    }
    let shared: Vec<&Vec<(usize, usize)>> = holders.values().filter(|h| h.len() >= 2).collect();
    if shared.is_empty() {
        return Err(Error::NoSharedCenters);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n_pairs)
        .map(|_| {
            let h = shared[rng.random_range(0..shared.len())];
            let a = rng.random_range(0..h.len());
            let mut b = rng.random_range(0..h.len() - 1);
            if b >= a {
                b += 1;
            }
            let (sa, ia) = h[a];
            let (sb, ib) = h[b];
            PatchPair {
                subjects: (sa, sb),
                first: subject_patches[sa][ia].clone(),
                second: subject_patches[sb][ib].clone(),
            }
        })
        .collect();
    Ok(PairBatch { pairs })
}

/// Counter-based generator for the corruption of one presentation: the key
/// `(seed, id)` alone fixes the mask, independent of iteration order.
pub fn corruption_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Masking noise: each entry is zeroed independently with probability `rate`.
pub fn corrupt_with<R: Rng + ?Sized>(values: &[f64], rate: f64, rng: &mut R) -> Vec<f64> {
    values
        .iter()
        .map(|&v| if rng.random::<f64>() < rate { 0.0 } else { v })
        .collect()
}

pub fn corrupt(x: &Patch, rate: f64, seed: u64) -> Patch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Patch {
        center: x.center,
        values: corrupt_with(&x.values, rate, &mut rng),
    }
}
