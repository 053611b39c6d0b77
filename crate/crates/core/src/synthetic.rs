//! Deterministic synthetic cohorts: a shared smooth template, independent
//! per-subject noise, and one test subject carrying a spherical lesion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::derive_seed;
use crate::detector::VoxelMask;
use crate::error::{Error, Result};
use crate::volume::{Dims, Volume, Voxel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lesion {
    pub center: Voxel,
    pub radius: f64,
    pub shift: f32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticCohortSpec {
    pub dims: Dims,
    /// Number of healthy subjects; the test subject comes on top.
    pub subjects: usize,
    /// Box-blur passes applied to the template's random field.
    pub smoothness: usize,
    /// Standard deviation of the per-voxel subject noise.
    pub noise: f32,
    /// Box-blur passes applied to each subject's noise before scaling it
    /// back to standard deviation `noise`; 0 gives white noise.
    pub noise_smoothness: usize,
    pub lesion: Lesion,
    /// Intensity of the one-voxel outer shell, above any interior value.
    pub rim: f32,
    pub seed: u64,
}

impl SyntheticCohortSpec {
    /// A cube of side `n` with a radius-4, +0.4 lesion at its center.
    pub fn reference(n: usize, subjects: usize, seed: u64) -> Self {
        Self {
            dims: Dims::cube(n),
            subjects,
            smoothness: 3,
            noise: 0.05,
            noise_smoothness: 0,
            lesion: Lesion {
                center: Voxel::new(n / 2, n / 2, n / 2),
                radius: 4.0,
                shift: 0.4,
            },
            rim: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.is_empty() {
            return Err(Error::InvalidArgument(
                "cohort dims must be positive".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise {} must be >= 0",
                self.noise
            )));
        }
        let l = self.lesion;
        if !(l.radius >= 0.0 && l.radius.is_finite() && l.shift.is_finite()) {
            return Err(Error::InvalidArgument(
                "lesion radius and shift must be finite".into(),
            ));
        }
        let fits = |c: usize, n: usize| {
            c as f64 - l.radius >= 0.0 && c as f64 + l.radius <= (n - 1) as f64
        };
        if !(fits(l.center.x, d.nx) && fits(l.center.y, d.ny) && fits(l.center.z, d.nz)) {
            return Err(Error::InvalidArgument(format!(
                "lesion at {} with radius {} does not fit in {}x{}x{}",
                l.center, l.radius, d.nx, d.ny, d.nz
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub template: Vec<f32>,
    pub healthy: Vec<Volume>,
    pub test: Volume,
    pub truth: VoxelMask,
}

const TAG_TEMPLATE: u64 = 0x7e3;
const TAG_NOISE: u64 = 0x401;

/// Voxels within `radius` (Euclidean) of the lesion center; empty for radius 0.
pub fn lesion_mask(dims: Dims, lesion: &Lesion) -> VoxelMask {
    let r2 = lesion.radius * lesion.radius;
    let c = lesion.center;
    let values = (0..dims.len())
        .map(|i| {
            let v = dims.voxel(i);
            let d2 = [(v.x, c.x), (v.y, c.y), (v.z, c.z)]
                .iter()
                .map(|&(a, b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>();
            lesion.radius > 0.0 && d2 <= r2
        })
        .collect();
    VoxelMask { dims, values }
}

fn blur_axis(field: &[f64], dims: Dims, axis: usize) -> Vec<f64> {
    let n = [dims.nx, dims.ny, dims.nz][axis];
    (0..field.len())
        .map(|i| {
            let v = dims.voxel(i);
            let c = [v.x, v.y, v.z][axis];
            let lo = c.saturating_sub(1);
            let hi = (c + 1).min(n - 1);
            let at = |k: usize| {
                let mut p = [v.x, v.y, v.z];
                p[axis] = k;
                field[dims.index(p[0], p[1], p[2])]
            };
            (lo..=hi).map(at).sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Smooth template: a few low-frequency sinusoids plus a blurred random
/// field, in roughly [0.2, 0.6], surrounded by a bright rim.
pub fn template(spec: &SyntheticCohortSpec) -> Vec<f32> {
    let d = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, TAG_TEMPLATE));
    let waves: Vec<([f64; 3], f64)> = (0..3)
        .map(|_| {
            let f = [0; 3].map(|_: i32| rng.random_range(1..=2) as f64);
            (f, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let mut field: Vec<f64> = (0..d.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..spec.smoothness {
        for axis in 0..3 {
            field = blur_axis(&field, d, axis);
        }
    }
    let peak = field
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let size = [d.nx as f64, d.ny as f64, d.nz as f64];
    (0..d.len())
        .map(|i| {
            let v = d.voxel(i);
            let on_rim = [(v.x, d.nx), (v.y, d.ny), (v.z, d.nz)]
                .iter()
                .any(|&(c, n)| c == 0 || c + 1 == n);
            if on_rim {
                return spec.rim;
            }
            let p = [v.x as f64, v.y as f64, v.z as f64];
            let wave: f64 = waves
                .iter()
                .map(|(f, phase)| {
                    let arg: f64 = (0..3).map(|a| f[a] * p[a] / size[a]).sum();
                    (std::f64::consts::TAU * arg + phase).sin()
                })
                .sum::<f64>()
                / waves.len() as f64;
            (0.4 + 0.1 * wave + 0.1 * field[i] / peak) as f32
        })
        .collect()
}

fn noisy(spec: &SyntheticCohortSpec, base: &[f32], stream: usize) -> Result<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, TAG_NOISE));
    rng.set_stream(stream as u64);
    let normal =
        Normal::new(0.0f64, 1.0).map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
    let mut field: Vec<f64> = (0..base.len()).map(|_| normal.sample(&mut rng)).collect();
    if spec.noise_smoothness > 0 {
        for _ in 0..spec.noise_smoothness {
            for axis in 0..3 {
                field = blur_axis(&field, spec.dims, axis);
            }
        }
        let sd = (field.iter().map(|x| x * x).sum::<f64>() / field.len() as f64).sqrt();
        if sd > 0.0 {
            field.iter_mut().for_each(|x| *x /= sd);
        }
    }
    let sigma = spec.noise as f64;
    Ok(base
        .iter()
        .zip(&field)
        .map(|(&t, &e)| (t as f64 + sigma * e) as f32)
        .collect())
}

/// Builds the cohort. Subject `i` draws its noise from stream `i`; the test
/// subject uses stream `subjects`.
pub fn generate(spec: &SyntheticCohortSpec) -> Result<Cohort> {
    spec.validate()?;
    let dims = spec.dims;
    let template = template(spec);
    let full = vec![true; dims.len()];
    let healthy = (0..spec.subjects)
        .map(|s| Volume::new(dims, noisy(spec, &template, s)?, full.clone()))
        .collect::<Result<Vec<_>>>()?;
    let truth = lesion_mask(dims, &spec.lesion);
    let mut data = noisy(spec, &template, spec.subjects)?;
    for (x, &t) in data.iter_mut().zip(&truth.values) {
        if t {
            *x += spec.lesion.shift;
        }
    }
    Ok(Cohort {
        template,
        healthy,
        test: Volume::new(dims, data, full)?,
        truth,
    })
}
