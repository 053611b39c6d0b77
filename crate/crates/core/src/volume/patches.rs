use super::{Volume, Voxel};
use crate::error::{Error, Result};

/// A flattened `size x size` axial window, row-major with x fastest, tagged
/// with its center voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub center: Voxel,
    pub values: Vec<f64>,
}

impl Patch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Extracts axial `size x size` windows at offsets `0, stride, 2*stride, ...`
/// in x and y on every z-slice. Windows that would cross the slice border are
/// skipped, and a patch is only emitted when its center voxel is masked.
///
/// Patches come out in (z, y, x) order of their centers.
pub fn extract_patches(v: &Volume, size: usize, stride: usize) -> Result<Vec<Patch>> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "patch size must be odd, got {size}"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let dims = v.dims();
    if size > dims.nx || size > dims.ny {
        return Err(Error::InvalidArgument(format!(
            "patch size {size} exceeds slice {}x{}",
            dims.nx, dims.ny
        )));
    }
    let half = (size - 1) / 2;
    let data = v.data();
    let mut out = Vec::new();
    for z in 0..dims.nz {
        for oy in (0..=dims.ny - size).step_by(stride) {
            for ox in (0..=dims.nx - size).step_by(stride) {
                let center = Voxel::new(ox + half, oy + half, z);
                if !v.is_masked(center) {
                    continue;
                }
                let mut values = Vec::with_capacity(size * size);
                for y in oy..oy + size {
                    let row = dims.index(ox, y, z);
                    for &x in &data[row..row + size] {
                        if !(0.0..=1.0).contains(&x) {
                            return Err(Error::InvalidArgument(format!(
                                "intensity {x} outside [0, 1] in patch at {center}; rescale first"
                            )));
                        }
                        values.push(x as f64);
                    }
                }
                out.push(Patch { center, values });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;
    use proptest::prelude::*;

    fn full(dims: Dims) -> Volume {
        let data = (0..dims.len()).map(|i| (i % 97) as f32 / 96.0).collect();
        Volume::new(dims, data, vec![true; dims.len()]).unwrap()
    }

    #[test]
    fn exact_fit_gives_one_patch() {
        let p = extract_patches(&full(Dims::new(9, 9, 1)), 9, 5).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].center, Voxel::new(4, 4, 0));
        assert_eq!(p[0].len(), 81);
    }

    #[test]
    fn fourteen_square_gives_four() {
        let p = extract_patches(&full(Dims::new(14, 14, 1)), 9, 5).unwrap();
        let centers: Vec<_> = p.iter().map(|p| (p.center.x, p.center.y)).collect();
        assert_eq!(centers, vec![(4, 4), (9, 4), (4, 9), (9, 9)]);
    }

    #[test]
    fn nineteen_by_two_slices() {
        assert_eq!(
            extract_patches(&full(Dims::new(19, 19, 2)), 9, 5)
                .unwrap()
                .len(),
            18
        );
    }

    #[test]
    fn even_size_rejected() {
        assert!(extract_patches(&full(Dims::new(10, 10, 1)), 4, 1).is_err());
    }

    #[test]
    fn oversized_patch_rejected() {
        assert!(extract_patches(&full(Dims::new(5, 12, 1)), 7, 1).is_err());
    }

    #[test]
    fn values_are_the_window_in_row_major_order() {
        let v = full(Dims::new(6, 5, 2));
        let p = extract_patches(&v, 3, 2).unwrap();
        let q = p.iter().find(|p| p.center == Voxel::new(3, 3, 1)).unwrap();
        let mut expected = Vec::new();
        for y in 2..5 {
            for x in 2..5 {
                expected.push(v.get(x, y, 1) as f64);
            }
        }
        assert_eq!(q.values, expected);
    }

    #[test]
    fn unscaled_volume_rejected() {
        let dims = Dims::new(3, 3, 1);
        let v = Volume::new(dims, vec![2.0; 9], vec![true; 9]).unwrap();
        assert!(extract_patches(&v, 3, 1).is_err());
    }

    proptest! {
        #[test]
        fn count_matches_window_enumeration(
            nx in 3usize..14, ny in 3usize..14, nz in 1usize..4,
            size in prop::sample::select(vec![1usize, 3, 5]),
            stride in 1usize..6,
            seed in any::<u64>(),
        ) {
            prop_assume!(size <= nx && size <= ny);
            let dims = Dims::new(nx, ny, nz);
            let mask: Vec<bool> = (0..dims.len())
                .map(|i| (seed.rotate_left(i as u32 % 64) ^ i as u64) % 3 != 0)
                .collect();
            let v = Volume::new(dims, vec![0.5; dims.len()], mask).unwrap();
            let got = extract_patches(&v, size, stride).unwrap();

            let half = size / 2;
            let mut expected = Vec::new();
            for z in 0..nz {
                for oy in 0..ny {
                    for ox in 0..nx {
                        let on_grid = ox % stride == 0 && oy % stride == 0;
                        let fits = ox + size <= nx && oy + size <= ny;
                        let c = Voxel::new(ox + half, oy + half, z);
                        if on_grid && fits && v.is_masked(c) {
                            expected.push(c);
                        }
                    }
                }
            }
            let got: Vec<_> = got.iter().map(|p| p.center).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
