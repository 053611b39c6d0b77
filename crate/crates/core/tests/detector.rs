mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxel_outlier::detector::{
    build_bank, connected_components_26, filter_clusters, score_subject, threshold_map,
    DistanceMap, SubjectCodes, VoxelMask,
};
use voxel_outlier::ocsvm::MedianHeuristic;
use voxel_outlier::volume::{Dims, Voxel};

fn random_mask(rng: &mut ChaCha8Rng, n: usize, fill: f64) -> VoxelMask {
    let dims = Dims::cube(n);
    let values = (0..dims.len()).map(|_| rng.random_bool(fill)).collect();
    VoxelMask::new(dims, values).unwrap()
}

fn as_roots(labels: &[u32]) -> Vec<usize> {
    labels
        .iter()
        .map(|&l| if l == 0 { usize::MAX } else { l as usize })
        .collect()
}

#[test]
fn labeling_matches_union_find() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..40 {
        let fill = 0.05 + 0.45 * (trial as f64 / 39.0);
        let m = random_mask(&mut rng, 12, fill);
        let c = connected_components_26(&m);
        let oracle = common::union_find_components((12, 12, 12), &m.values);
        assert!(
            common::same_partition(&as_roots(&c.labels), &oracle),
            "trial {trial}"
        );
        assert_eq!(c.clusters.iter().map(|s| s.size).sum::<usize>(), m.count());
    }
}

#[test]
fn filtered_clusters_are_large_and_connected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let m = random_mask(&mut rng, 14, 0.2);
        let f = filter_clusters(&connected_components_26(&m), 10);
        for s in &f.clusters {
            assert!(s.size >= 10);
            let region: Vec<bool> = f.labels.iter().map(|&l| l == s.label).collect();
            let relabeled = connected_components_26(&VoxelMask::new(f.dims, region).unwrap());
            assert_eq!(relabeled.len(), 1);
            assert_eq!(relabeled.clusters[0].size, s.size);
        }
        assert_eq!(filter_clusters(&f, 10), f);
    }
}

fn cohort(rng: &mut ChaCha8Rng, dims: Dims, subjects: usize) -> Vec<SubjectCodes> {
    (0..subjects)
        .map(|_| {
            (0..dims.len())
                .map(|i| {
                    let v = dims.voxel(i);
                    let base = (v.x + 2 * v.y + 3 * v.z) as f64 * 0.05;
                    (
                        v,
                        (0..3)
                            .map(|k| base + k as f64 * 0.1 + rng.random_range(-0.05..0.05))
                            .collect(),
                    )
                })
                .collect()
        })
        .collect()
}

#[test]
fn scores_do_not_depend_on_other_centers() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dims = Dims::new(4, 3, 2);
    let train = cohort(&mut rng, dims, 10);
    let test = cohort(&mut rng, dims, 1).pop().unwrap();
    let (bank, report) = build_bank(&train, 0.2, MedianHeuristic::default()).unwrap();
    assert_eq!(report.trained, dims.len());
    let full = score_subject(&bank, &test, dims).unwrap();
    let keep = |v: Voxel| (v.x + v.y + v.z).is_multiple_of(2);
    let part = score_subject(&bank.restrict(keep), &test, dims).unwrap();
    for i in 0..dims.len() {
        if keep(dims.voxel(i)) {
            assert_eq!(part.scores[i], full.scores[i]);
            assert!(part.valid[i]);
        } else {
            assert!(!part.valid[i]);
        }
    }
}

#[test]
fn shrinking_p_never_adds_voxels() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dims = Dims::cube(10);
    let d = DistanceMap {
        dims,
        scores: (0..dims.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
        valid: (0..dims.len()).map(|_| rng.random_bool(0.9)).collect(),
    };
    let ps = [0.5, 0.2, 0.05, 0.01, 0.003, 0.001];
    let kept: Vec<VoxelMask> = ps.iter().map(|&p| threshold_map(&d, p).unwrap()).collect();
    for w in kept.windows(2) {
        assert!(w[1].count() <= w[0].count());
        assert!(w[1].values.iter().zip(&w[0].values).all(|(&a, &b)| !a || b));
    }
}
