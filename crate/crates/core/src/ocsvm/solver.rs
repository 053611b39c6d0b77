//! Pairwise coordinate descent (SMO) for the one-class dual.
//!
//! Every step moves mass `delta` from one coefficient to another, which keeps
//! `sum a = 1`. The pair is the maximal KKT violator `i = argmin G` over
//! coefficients below the upper bound, matched with the `j` of maximal
//! second-order gain among coefficients above zero, where `G = K a`.

use super::KernelConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop once `max_{a_j>0} G_j - min_{a_i<C} G_i` is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    pub converged: bool,
    pub max_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    /// One coefficient per training point, in input order.
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub upper_bound: f64,
    /// Canonical (lexicographic) order of the training points used by the solver.
    pub order: Vec<usize>,
    pub stats: SolverStats,
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

pub fn solve_dual(
    x: &[Vec<f64>],
    nu: f64,
    kernel: KernelConfig,
    options: SolverOptions,
) -> Result<DualSolution> {
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "one-class SVM needs at least one point".into(),
        ));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "nu must lie in (0, 1], got {nu}"
        )));
    }
    let dim = x[0].len();
    for p in x {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
    }

    // Solve in a canonical order so permuting the input cannot change the result.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lexicographic(&x[a], &x[b]).then(a.cmp(&b)));
    let pts: Vec<&[f64]> = order.iter().map(|&i| x[i].as_slice()).collect();

    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = kernel.eval(pts[i], pts[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }

    let c = 1.0 / (nu * n as f64);
    let full = ((nu * n as f64).floor() as usize).min(n);
    let mut a = vec![0.0; n];
    for v in a.iter_mut().take(full) {
        *v = c;
    }
    if full < n {
        a[full] = (1.0 - full as f64 * c).clamp(0.0, c);
    }

    let mut g = vec![0.0; n];
    for (j, &aj) in a.iter().enumerate() {
        if aj != 0.0 {
            for (gi, kij) in g.iter_mut().zip(&k[j * n..(j + 1) * n]) {
                *gi += aj * kij;
            }
        }
    }

    let mut iterations = 0;
    let mut violation;
    loop {
        // i: may increase (a_i < C), smallest gradient.
        let mut i_up = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if a[t] < c && g[t] < g_min {
                g_min = g[t];
                i_up = t;
            }
            if a[t] > 0.0 && g[t] > g_max {
                g_max = g[t];
            }
        }
        violation = if i_up == usize::MAX {
            0.0
        } else {
            (g_max - g_min).max(0.0)
        };
        if violation <= options.tolerance || iterations >= options.max_iterations {
            break;
        }

        // j: may decrease (a_j > 0), largest second-order gain.
        let i = i_up;
        let mut j = usize::MAX;
        let mut best = 0.0;
        for t in 0..n {
            if a[t] > 0.0 && g[t] > g[i] {
                let diff = g[t] - g[i];
                let curv = (k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t]).max(1e-12);
                let gain = diff * diff / curv;
                if gain > best {
                    best = gain;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            break;
        }

        let curv = (k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j]).max(1e-12);
        let mut delta = (g[j] - g[i]) / curv;
        let room_i = c - a[i];
        let room_j = a[j];
        if delta >= room_i.min(room_j) {
            delta = room_i.min(room_j);
            if room_i <= room_j {
                a[i] = c;
                a[j] -= delta;
                if room_i == room_j {
                    a[j] = 0.0;
                }
            } else {
                a[i] += delta;
                a[j] = 0.0;
            }
        } else {
            a[i] += delta;
            a[j] -= delta;
        }
        let (ki, kj) = (&k[i * n..(i + 1) * n], &k[j * n..(j + 1) * n]);
        for ((gt, kit), kjt) in g.iter_mut().zip(ki).zip(kj) {
            *gt += delta * (kit - kjt);
        }
        iterations += 1;
    }

    if violation <= options.tolerance {
        if let Some((polished, pg, pv)) = polish(&k, n, &a, c) {
            if pv <= violation {
                a = polished;
                g = pg;
                violation = pv;
            }
        }
    }

    let rho = offset(&a, &g, c);
    let mut alphas = vec![0.0; n];
    for (pos, &orig) in order.iter().enumerate() {
        alphas[orig] = a[pos];
    }
    Ok(DualSolution {
        alphas,
        rho,
        upper_bound: c,
        order,
        stats: SolverStats {
            iterations,
            converged: violation <= options.tolerance,
            max_violation: violation,
        },
    })
}

fn max_violation(a: &[f64], g: &[f64], c: f64) -> f64 {
    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    for (&ai, &gi) in a.iter().zip(g) {
        if ai < c {
            g_min = g_min.min(gi);
        }
        if ai > 0.0 {
            g_max = g_max.max(gi);
        }
    }
    if g_min.is_finite() && g_max.is_finite() {
        (g_max - g_min).max(0.0)
    } else {
        0.0
    }
}

/// Re-solves the free coefficients exactly with the bounded ones held fixed:
/// `K_FF a_F - rho 1 = -K_FB a_B`, `sum a_F = 1 - sum a_B`. Returns `None` when
/// the system is singular or the solution leaves the box.
fn polish(k: &[f64], n: usize, a: &[f64], c: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let free: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0 && a[i] < c).collect();
    if free.is_empty() {
        return None;
    }
    let m = free.len() + 1;
    let mut sys = vec![0.0; m * (m + 1)];
    let bounded_mass: f64 = a.iter().filter(|&&ai| ai >= c).sum();
    for (r, &i) in free.iter().enumerate() {
        let row = &mut sys[r * (m + 1)..(r + 1) * (m + 1)];
        for (col, &j) in free.iter().enumerate() {
            row[col] = k[i * n + j];
        }
        row[m - 1] = -1.0;
        row[m] = -(0..n)
            .filter(|&j| a[j] >= c)
            .map(|j| k[i * n + j] * a[j])
            .sum::<f64>();
    }
    let last = &mut sys[(m - 1) * (m + 1)..];
    for v in last.iter_mut().take(m - 1) {
        *v = 1.0;
    }
    last[m - 1] = 0.0;
    last[m] = 1.0 - bounded_mass;

    let solution = gaussian_solve(&mut sys, m)?;
    let mut out = a.to_vec();
    for (&i, &v) in free.iter().zip(&solution) {
        if !(v > 0.0 && v < c) {
            return None;
        }
        out[i] = v;
    }
    let mut g = vec![0.0; n];
    for (j, &aj) in out.iter().enumerate() {
        if aj != 0.0 {
            for (gi, kij) in g.iter_mut().zip(&k[j * n..(j + 1) * n]) {
                *gi += aj * kij;
            }
        }
    }
    let v = max_violation(&out, &g, c);
    Some((out, g, v))
}

/// Gaussian elimination with partial pivoting on an `m x (m+1)` augmented matrix.
fn gaussian_solve(sys: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let w = m + 1;
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&r1, &r2| sys[r1 * w + col].abs().total_cmp(&sys[r2 * w + col].abs()))?;
        if sys[pivot * w + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for t in 0..w {
                sys.swap(pivot * w + t, col * w + t);
            }
        }
        for r in col + 1..m {
            let f = sys[r * w + col] / sys[col * w + col];
            if f != 0.0 {
                for t in col..w {
                    sys[r * w + t] -= f * sys[col * w + t];
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|t| sys[r * w + t] * x[t]).sum();
        x[r] = (sys[r * w + m] - s) / sys[r * w + r];
        if !x[r].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Mean gradient over free coefficients; without any, the midpoint of the
/// interval allowed by the KKT conditions of the bounded ones.
fn offset(a: &[f64], g: &[f64], c: f64) -> f64 {
    let mut sum = 0.0;
    let mut free = 0usize;
    let mut lower = f64::NEG_INFINITY; // from a_i = C: G_i <= rho
    let mut upper = f64::INFINITY; // from a_i = 0: G_i >= rho
    for (&ai, &gi) in a.iter().zip(g) {
        if ai > 0.0 && ai < c {
            sum += gi;
            free += 1;
        } else if ai >= c {
            lower = lower.max(gi);
        } else {
            upper = upper.min(gi);
        }
    }
    if free > 0 {
        sum / free as f64
    } else if lower.is_finite() && upper.is_finite() {
        0.5 * (lower + upper)
    } else if lower.is_finite() {
        lower
    } else {
        upper
    }
}
