//! 26-connected component labeling and cluster-size filtering.

use super::{DistanceMap, VoxelMask};
use crate::error::{Error, Result};
use crate::volume::Dims;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats {
    pub label: u32,
    pub size: usize,
    /// Mean voxel coordinate (x, y, z).
    pub centroid: [f64; 3],
    /// Lowest score inside the cluster, when a distance map was attached.
    pub min_score: Option<f64>,
}

/// Labeled grid: 0 is background, clusters are numbered `1..=k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterMap {
    pub dims: Dims,
    pub labels: Vec<u32>,
    pub clusters: Vec<ClusterStats>,
}

impl ClusterMap {
    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            labels: vec![0; dims.len()],
            clusters: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Rebuilds statistics from a stored label grid.
    pub fn from_labels(dims: Dims, labels: &[i32]) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                found: labels.len(),
            });
        }
        let labels: Vec<u32> = labels
            .iter()
            .map(|&l| {
                u32::try_from(l).map_err(|_| Error::InvalidArgument(format!("negative label {l}")))
            })
            .collect::<Result<_>>()?;
        let k = labels.iter().copied().max().unwrap_or(0) as usize;
        let clusters = stats(dims, &labels, k);
        if let Some(c) = clusters.iter().find(|c| c.size == 0) {
            return Err(Error::InvalidArgument(format!(
                "labels are not dense: {} is unused",
                c.label
            )));
        }
        Ok(Self {
            dims,
            labels,
            clusters,
        })
    }

    pub fn to_labels(&self) -> Vec<i32> {
        self.labels.iter().map(|&l| l as i32).collect()
    }

    /// Records the lowest score of each cluster.
    pub fn with_scores(mut self, d: &DistanceMap) -> Result<Self> {
        if d.dims != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                found: d.dims.len(),
            });
        }
        let mut mins = vec![f64::INFINITY; self.clusters.len()];
        for ((&l, &s), &v) in self.labels.iter().zip(&d.scores).zip(&d.valid) {
            if l > 0 && v {
                let m = &mut mins[l as usize - 1];
                *m = m.min(s);
            }
        }
        for (c, m) in self.clusters.iter_mut().zip(mins) {
            c.min_score = m.is_finite().then_some(m);
        }
        Ok(self)
    }
}

fn stats(dims: Dims, labels: &[u32], k: usize) -> Vec<ClusterStats> {
    let mut sums = vec![[0.0f64; 3]; k];
    let mut sizes = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            let v = dims.voxel(i);
            let s = &mut sums[l as usize - 1];
            s[0] += v.x as f64;
            s[1] += v.y as f64;
            s[2] += v.z as f64;
            sizes[l as usize - 1] += 1;
        }
    }
    sizes
        .iter()
        .zip(sums)
        .enumerate()
        .map(|(i, (&size, s))| {
            let n = size.max(1) as f64;
            ClusterStats {
                label: i as u32 + 1,
                size,
                centroid: [s[0] / n, s[1] / n, s[2] / n],
                min_score: None,
            }
        })
        .collect()
}

/// Maximal components under 26-adjacency (face, edge and corner neighbors),
/// labeled in order of first encounter in the x-fastest scan.
pub fn connected_components_26(kept: &VoxelMask) -> ClusterMap {
    let dims = kept.dims;
    let mut labels = vec![0u32; dims.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..dims.len() {
        if !kept.values[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let v = dims.voxel(i);
            let zs = v.z.saturating_sub(1)..=(v.z + 1).min(dims.nz - 1);
            for z in zs {
                for y in v.y.saturating_sub(1)..=(v.y + 1).min(dims.ny - 1) {
                    for x in v.x.saturating_sub(1)..=(v.x + 1).min(dims.nx - 1) {
                        let j = dims.index(x, y, z);
                        if kept.values[j] && labels[j] == 0 {
                            labels[j] = next;
                            stack.push(j);
                        }
                    }
                }
            }
        }
    }
    let clusters = stats(dims, &labels, next as usize);
    ClusterMap {
        dims,
        labels,
        clusters,
    }
}

/// Drops clusters with fewer than `min_size` voxels and renumbers the rest
/// `1..=k`, preserving their relative order.
pub fn filter_clusters(c: &ClusterMap, min_size: usize) -> ClusterMap {
    let mut remap = vec![0u32; c.clusters.len() + 1];
    let mut clusters = Vec::new();
    for s in &c.clusters {
        if s.size >= min_size {
            let label = clusters.len() as u32 + 1;
            remap[s.label as usize] = label;
            clusters.push(ClusterStats { label, ..s.clone() });
        }
    }
    ClusterMap {
        dims: c.dims,
        labels: c.labels.iter().map(|&l| remap[l as usize]).collect(),
        clusters,
    }
}
