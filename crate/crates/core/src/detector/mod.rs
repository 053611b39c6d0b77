//! Per-voxel one-class classifiers and the post-processing that turns a test
//! subject's scores into a cluster map.

mod evaluate;
mod format;
mod labeling;
mod threshold;

pub use evaluate::{evaluate, DetectionReport};
pub use format::{decode_bank, encode_bank, load_bank, save_bank, BANK_MAGIC, BANK_VERSION};
pub use labeling::{connected_components_26, filter_clusters, ClusterMap, ClusterStats};
pub use threshold::{quantile_threshold, threshold_map};

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::Representation;
use crate::ocsvm::{train_ocsvm, KernelConfig, MedianHeuristic, OcSvmModel};
use crate::volume::{Dims, Volume, Voxel};

/// One subject's representations, keyed by patch center.
pub type SubjectCodes = BTreeMap<Voxel, Representation>;

pub const DEFAULT_NU: f64 = 0.03;

#[derive(Clone, Debug, PartialEq)]
pub struct BankEntry {
    pub center: Voxel,
    pub model: OcSvmModel,
}

/// One classifier per covered voxel, sorted by center in (z, y, x) order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierBank {
    nu: f64,
    feature_dim: usize,
    entries: Vec<BankEntry>,
}

impl ClassifierBank {
    pub fn new(nu: f64, feature_dim: usize, mut entries: Vec<BankEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.center);
        if let Some(w) = entries.windows(2).find(|w| w[0].center == w[1].center) {
            return Err(Error::InvalidArgument(format!(
                "duplicate classifier at {}",
                w[0].center
            )));
        }
        if let Some(e) = entries.iter().find(|e| e.model.dim() != feature_dim) {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                found: e.model.dim(),
            });
        }
        Ok(Self {
            nu,
            feature_dim,
            entries,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn centers(&self) -> impl Iterator<Item = Voxel> + '_ {
        self.entries.iter().map(|e| e.center)
    }

    pub fn get(&self, center: Voxel) -> Option<&OcSvmModel> {
        self.entries
            .binary_search_by_key(&center, |e| e.center)
            .ok()
            .map(|i| &self.entries[i].model)
    }

    /// Sub-bank restricted to `keep`.
    pub fn restrict(&self, keep: impl Fn(Voxel) -> bool) -> Self {
        Self {
            nu: self.nu,
            feature_dim: self.feature_dim,
            entries: self
                .entries
                .iter()
                .filter(|e| keep(e.center))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipReason {
    /// Fewer than two subjects had a representation at this center.
    TooFewSubjects(usize),
    /// Every subject's representation at this center is identical.
    DegenerateSpread,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BankReport {
    pub trained: usize,
    pub skipped: Vec<(Voxel, SkipReason)>,
    /// Centers whose solver hit the iteration cap.
    pub unconverged: Vec<Voxel>,
}

/// Trains one classifier per center on the matrix of all subjects'
/// representations there, with `gamma` chosen per center by `heuristic`.
pub fn build_bank(
    subjects: &[SubjectCodes],
    nu: f64,
    heuristic: MedianHeuristic,
) -> Result<(ClassifierBank, BankReport)> {
    let mut feature_dim = None;
    let mut matrices: BTreeMap<Voxel, Vec<Vec<f64>>> = BTreeMap::new();
    for codes in subjects {
        for (&center, repr) in codes {
            match feature_dim {
                None => feature_dim = Some(repr.len()),
                Some(d) if d != repr.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: repr.len(),
                    })
                }
                _ => {}
            }
            matrices.entry(center).or_default().push(repr.clone());
        }
    }
    let feature_dim = feature_dim.ok_or(Error::EmptyBank)?;

    enum Outcome {
        Trained(BankEntry, bool),
        Skipped(Voxel, SkipReason),
    }
    let work: Vec<(Voxel, Vec<Vec<f64>>)> = matrices.into_iter().collect();
    let outcomes: Vec<Outcome> = work
        .into_par_iter()
        .map(|(center, points)| -> Result<Outcome> {
            if points.len() < 2 {
                return Ok(Outcome::Skipped(
                    center,
                    SkipReason::TooFewSubjects(points.len()),
                ));
            }
            let gamma = match heuristic.gamma(&points) {
                Ok(g) => g,
                Err(Error::DegenerateSpread) => {
                    return Ok(Outcome::Skipped(center, SkipReason::DegenerateSpread))
                }
                Err(e) => return Err(e),
            };
            let (model, stats) = train_ocsvm(&points, nu, KernelConfig::new(gamma)?)?;
            Ok(Outcome::Trained(
                BankEntry { center, model },
                stats.converged,
            ))
        })
        .collect::<Result<_>>()?;

    let mut report = BankReport::default();
    let mut entries = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Outcome::Trained(entry, converged) => {
                if !converged {
                    report.unconverged.push(entry.center);
                }
                entries.push(entry);
            }
            Outcome::Skipped(center, reason) => report.skipped.push((center, reason)),
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyBank);
    }
    report.trained = entries.len();
    Ok((ClassifierBank::new(nu, feature_dim, entries)?, report))
}

/// Signed per-voxel scores of one subject; only `valid` voxels carry a score.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    pub dims: Dims,
    pub scores: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DistanceMap {
    pub fn valid_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(&s, _)| s)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Stores scores as float32 intensities with the validity grid as mask.
    pub fn to_volume(&self) -> Volume {
        let data = self
            .scores
            .iter()
            .zip(&self.valid)
            .map(|(&s, &v)| if v { s as f32 } else { 0.0 })
            .collect();
        Volume::new(self.dims, data, self.valid.clone()).expect("shape checked at construction")
    }

    pub fn from_volume(v: &Volume) -> Self {
        Self {
            dims: v.dims(),
            scores: v.data().iter().map(|&s| s as f64).collect(),
            valid: v.mask().to_vec(),
        }
    }
}

/// Scores every bank center the subject also covers.
pub fn score_subject(
    bank: &ClassifierBank,
    subject: &SubjectCodes,
    dims: Dims,
) -> Result<DistanceMap> {
    if let Some(r) = subject.values().find(|r| r.len() != bank.feature_dim) {
        return Err(Error::DimensionMismatch {
            expected: bank.feature_dim,
            found: r.len(),
        });
    }
    if let Some(e) = bank.entries.iter().find(|e| !dims.contains(e.center)) {
        return Err(Error::InvalidArgument(format!(
            "bank center {} lies outside {}x{}x{}",
            e.center, dims.nx, dims.ny, dims.nz
        )));
    }
    let scored: Vec<(usize, f64)> = bank
        .entries
        .par_iter()
        .filter_map(|e| {
            subject
                .get(&e.center)
                .map(|r| (dims.voxel_index(e.center), e.model.decision_unchecked(r)))
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut scores = vec![0.0; dims.len()];
    let mut valid = vec![false; dims.len()];
    for (i, s) in scored {
        scores[i] = s;
        valid[i] = true;
    }
    Ok(DistanceMap {
        dims,
        scores,
        valid,
    })
}

/// Boolean voxel grid (thresholded maps, ground-truth lesions).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelMask {
    pub dims: Dims,
    pub values: Vec<bool>,
}

impl VoxelMask {
    pub fn new(dims: Dims, values: Vec<bool>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                found: values.len(),
            });
        }
        Ok(Self { dims, values })
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn from_labels(dims: Dims, labels: &[i32]) -> Result<Self> {
        Self::new(dims, labels.iter().map(|&l| l != 0).collect())
    }

    pub fn to_labels(&self) -> Vec<i32> {
        self.values.iter().map(|&v| v as i32).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: usize) -> Voxel {
        Voxel::new(x, 0, 0)
    }

    fn codes(pairs: &[(Voxel, Vec<f64>)]) -> SubjectCodes {
        pairs.iter().cloned().collect()
    }

    #[test]
    fn single_center_bank() {
        let subjects = vec![
            codes(&[(v(1), vec![0.1, 0.2])]),
            codes(&[(v(1), vec![0.3, 0.9])]),
        ];
        let (bank, report) = build_bank(&subjects, DEFAULT_NU, MedianHeuristic::default()).unwrap();
        assert_eq!(bank.len(), 1);
        assert_eq!(report.trained, 1);
        let m = bank.get(v(1)).unwrap();
        assert!((m.alphas.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_thin_centers_are_skipped() {
        let subjects = vec![
            codes(&[
                (v(0), vec![0.5, 0.5]),
                (v(1), vec![0.1, 0.2]),
                (v(2), vec![0.3, 0.3]),
            ]),
            codes(&[(v(0), vec![0.5, 0.5]), (v(1), vec![0.4, 0.1])]),
        ];
        let (bank, report) = build_bank(&subjects, DEFAULT_NU, MedianHeuristic::default()).unwrap();
        assert_eq!(bank.centers().collect::<Vec<_>>(), vec![v(1)]);
        assert_eq!(
            report.skipped,
            vec![
                (v(0), SkipReason::DegenerateSpread),
                (v(2), SkipReason::TooFewSubjects(1))
            ]
        );
        let only_degenerate = vec![codes(&[(v(0), vec![1.0])]), codes(&[(v(0), vec![1.0])])];
        assert!(matches!(
            build_bank(&only_degenerate, DEFAULT_NU, MedianHeuristic::default()),
            Err(Error::EmptyBank)
        ));
    }

    fn random_bank(seed: u64) -> (ClassifierBank, Vec<SubjectCodes>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subjects: Vec<SubjectCodes> = (0..10)
            .map(|_| {
                (0..12)
                    .map(|c| {
                        (
                            Voxel::new(c % 4, c / 4, 1),
                            (0..3).map(|_| rng.random()).collect(),
                        )
                    })
                    .collect()
            })
            .collect();
        let (bank, _) = build_bank(&subjects, 0.2, MedianHeuristic::default()).unwrap();
        (bank, subjects)
    }

    #[test]
    fn scoring_covers_shared_centers_only() {
        let (bank, subjects) = random_bank(1);
        let dims = Dims::new(4, 3, 2);
        let mut partial = subjects[0].clone();
        partial.remove(&Voxel::new(0, 0, 1));
        let map = score_subject(&bank, &partial, dims).unwrap();
        assert_eq!(map.valid_count(), 11);
        assert!(!map.valid[dims.index(0, 0, 1)]);
        assert!(!map.valid[dims.index(0, 0, 0)]);
        let x = Voxel::new(2, 1, 1);
        let want = bank.get(x).unwrap().decision(&partial[&x]).unwrap();
        assert_eq!(map.scores[dims.voxel_index(x)], want);
    }

    #[test]
    fn scoring_errors() {
        let (bank, subjects) = random_bank(2);
        let dims = Dims::new(4, 3, 2);
        let elsewhere: SubjectCodes = [(Voxel::new(0, 0, 0), vec![0.0; 3])].into_iter().collect();
        assert!(matches!(
            score_subject(&bank, &elsewhere, dims),
            Err(Error::NoOverlap)
        ));
        let wrong: SubjectCodes = [(Voxel::new(0, 0, 1), vec![0.0; 2])].into_iter().collect();
        assert!(matches!(
            score_subject(&bank, &wrong, dims),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(score_subject(&bank, &subjects[0], Dims::new(2, 2, 2)).is_err());
    }

    #[test]
    fn restricting_the_bank_leaves_other_scores_alone() {
        let (bank, subjects) = random_bank(3);
        let dims = Dims::new(4, 3, 2);
        let full = score_subject(&bank, &subjects[4], dims).unwrap();
        let half = bank.restrict(|c| c.x < 2);
        let part = score_subject(&half, &subjects[4], dims).unwrap();
        for i in 0..dims.len() {
            if part.valid[i] {
                assert_eq!(part.scores[i], full.scores[i]);
            }
        }
        assert_eq!(part.valid_count(), 6);
    }

    #[test]
    fn bank_order_does_not_matter() {
        let (bank, subjects) = random_bank(4);
        let mut entries = bank.entries().to_vec();
        entries.reverse();
        let reordered = ClassifierBank::new(bank.nu(), bank.feature_dim(), entries).unwrap();
        assert_eq!(reordered, bank);
        let dims = Dims::new(4, 3, 2);
        assert_eq!(
            score_subject(&reordered, &subjects[1], dims).unwrap(),
            score_subject(&bank, &subjects[1], dims).unwrap()
        );
    }

    #[test]
    fn distance_map_volume_conversion() {
        let (bank, subjects) = random_bank(5);
        let map = score_subject(&bank, &subjects[0], Dims::new(4, 3, 2)).unwrap();
        let back = DistanceMap::from_volume(&map.to_volume());
        assert_eq!(back.valid, map.valid);
        for (a, b) in back.scores.iter().zip(&map.scores) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}
