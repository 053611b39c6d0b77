use std::fmt;

use super::{ClusterMap, VoxelMask};
use crate::error::{Error, Result};

/// Detection outcome of one cluster map against a ground-truth lesion grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectionReport {
    pub detected: bool,
    pub clusters: usize,
    /// Clusters overlapping at least one truth voxel.
    pub true_clusters: usize,
    pub false_positives: usize,
}

impl DetectionReport {
    /// Parses the key-value block produced by `Display`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut detected = None;
        let mut clusters = None;
        let mut true_clusters = None;
        let mut false_positives = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("bad report line {line:?}")))?;
            let count = || {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad count in {line:?}")))
            };
            match key {
                "lesion_detected" => {
                    detected = Some(match value {
                        "yes" => true,
                        "no" => false,
                        _ => return Err(Error::InvalidArgument(format!("bad flag in {line:?}"))),
                    })
                }
                "clusters" => clusters = Some(count()?),
                "true_positive_clusters" => true_clusters = Some(count()?),
                "false_positive_clusters" => false_positives = Some(count()?),
                _ => {}
            }
        }
        match (detected, clusters, true_clusters, false_positives) {
            (Some(detected), Some(clusters), Some(true_clusters), Some(false_positives)) => {
                Ok(Self {
                    detected,
                    clusters,
                    true_clusters,
                    false_positives,
                })
            }
            _ => Err(Error::InvalidArgument("incomplete detection report".into())),
        }
    }
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "lesion_detected={}",
            if self.detected { "yes" } else { "no" }
        )?;
        writeln!(f, "clusters={}", self.clusters)?;
        writeln!(f, "true_positive_clusters={}", self.true_clusters)?;
        writeln!(f, "false_positive_clusters={}", self.false_positives)
    }
}

pub fn evaluate(c: &ClusterMap, truth: &VoxelMask) -> Result<DetectionReport> {
    if c.dims != truth.dims {
        return Err(Error::DimensionMismatch {
            expected: c.dims.len(),
            found: truth.dims.len(),
        });
    }
    let mut hits = vec![false; c.clusters.len()];
    for (&l, &t) in c.labels.iter().zip(&truth.values) {
        if l > 0 && t {
            hits[l as usize - 1] = true;
        }
    }
    let true_clusters = hits.iter().filter(|&&h| h).count();
    Ok(DetectionReport {
        detected: true_clusters > 0,
        clusters: c.clusters.len(),
        true_clusters,
        false_positives: c.clusters.len() - true_clusters,
    })
}
