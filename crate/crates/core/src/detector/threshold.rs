use super::{DistanceMap, VoxelMask};
use crate::error::{Error, Result};

/// Lower-tail empirical `p`-quantile of the valid scores: the `ceil(p N)`-th
/// smallest (at least the smallest).
pub fn quantile_threshold(d: &DistanceMap, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile {p} outside (0, 1)"
        )));
    }
    let mut scores: Vec<f64> = d.valid_scores().collect();
    if scores.is_empty() {
        return Err(Error::EmptyMap);
    }
    let n = scores.len();
    // Absorb representation error in p * n, e.g. 0.003 * 1000 = 3.0000000000000004.
    let rank = ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let (_, &mut t, _) = scores.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(t)
}

/// Keeps every valid voxel scoring at or below the subject's own `p`-quantile;
/// ties at the threshold are all kept.
pub fn threshold_map(d: &DistanceMap, p: f64) -> Result<VoxelMask> {
    let t = quantile_threshold(d, p)?;
    let values = d
        .scores
        .iter()
        .zip(&d.valid)
        .map(|(&s, &v)| v && s <= t)
        .collect();
    VoxelMask::new(d.dims, values)
}
