//! Independent oracles shared by the integration tests. None of them call into
//! the code paths they check.
#![allow(dead_code)]

use voxel_outlier::network::{pair_loss, SiameseModel};

/// Dense projected-gradient (FISTA with restart) solve of
/// `min 1/2 a^T K a  s.t. 0 <= a <= c, sum a = 1`.
pub fn qp_oracle(k: &[Vec<f64>], c: f64) -> Vec<f64> {
    let n = k.len();
    let lipschitz = k
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let objective = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * a[j] * k[i][j];
            }
        }
        0.5 * s
    };
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| k[i][j] * a[j]).sum())
            .collect()
    };
    let mut a = project(&vec![1.0 / n as f64; n], c);
    let mut y = a.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&a);
    for _ in 0..2_000_000 {
        let gy = grad(&y);
        let cand: Vec<f64> = y.iter().zip(&gy).map(|(v, g)| v - step * g).collect();
        let next = project(&cand, c);
        let f_next = objective(&next);
        if f_next > f_prev && t > 1.0 {
            // Restart momentum; a plain projected step is always accepted.
            y = a.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved = next
            .iter()
            .zip(&a)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        y = next
            .iter()
            .zip(&a)
            .map(|(p, q)| p + (t - 1.0) / t_next * (p - q))
            .collect();
        a = next;
        t = t_next;
        f_prev = f_next;
        if moved < 1e-13 {
            break;
        }
    }
    a
}

/// Euclidean projection onto the capped simplex, by bisection on the shift.
fn project(v: &[f64], c: f64) -> Vec<f64> {
    let mass = |lambda: f64| -> f64 { v.iter().map(|x| (x - lambda).clamp(0.0, c)).sum() };
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - c - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    v.iter().map(|x| (x - lambda).clamp(0.0, c)).collect()
}

pub fn rbf_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| {
            x.iter()
                .map(|b| {
                    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
                    (-gamma * d2).exp()
                })
                .collect()
        })
        .collect()
}

pub fn dual_value(k: &[Vec<f64>], a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += a[i] * a[j] * k[i][j];
        }
    }
    0.5 * s
}

/// Offset from an oracle solution: mean of `(K a)_i` over clearly free
/// coefficients, else the midpoint of the KKT interval.
pub fn oracle_rho(k: &[Vec<f64>], a: &[f64], c: f64) -> f64 {
    let margin = 1e-7 * c;
    let g: Vec<f64> = (0..a.len())
        .map(|i| (0..a.len()).map(|j| k[i][j] * a[j]).sum())
        .collect();
    let free: Vec<f64> = (0..a.len())
        .filter(|&i| a[i] > margin && a[i] < c - margin)
        .map(|i| g[i])
        .collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    let lower = (0..a.len())
        .filter(|&i| a[i] >= c - margin)
        .map(|i| g[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let upper = (0..a.len())
        .filter(|&i| a[i] <= margin)
        .map(|i| g[i])
        .fold(f64::INFINITY, f64::min);
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => 0.5 * (lower + upper),
        (true, false) => lower,
        _ => upper,
    }
}

/// Union-find over explicit 26-neighbor pairs; returns a root id per voxel
/// (`usize::MAX` for background).
pub fn union_find_components(dims: (usize, usize, usize), kept: &[bool]) -> Vec<usize> {
    let (nx, ny, nz) = dims;
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let mut parent: Vec<usize> = (0..kept.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let a = idx(x, y, z);
                if !kept[a] {
                    continue;
                }
                for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if (dx, dy, dz) == (0, 0, 0) {
                                continue;
                            }
                            let (xx, yy, zz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if xx < 0
                                || yy < 0
                                || zz < 0
                                || xx >= nx as i64
                                || yy >= ny as i64
                                || zz >= nz as i64
                            {
                                continue;
                            }
                            let b = idx(xx as usize, yy as usize, zz as usize);
                            if kept[b] {
                                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                                if ra != rb {
                                    parent[ra.max(rb)] = ra.min(rb);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (0..kept.len())
        .map(|i| {
            if kept[i] {
                find(&mut parent, i)
            } else {
                usize::MAX
            }
        })
        .collect()
}

/// True when two labelings induce the same partition of the foreground.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    use std::collections::HashMap;
    let mut ab: HashMap<usize, usize> = HashMap::new();
    let mut ba: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == usize::MAX) != (y == usize::MAX) {
            return false;
        }
        if x == usize::MAX {
            continue;
        }
        if *ab.entry(x).or_insert(y) != y || *ba.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Max over every parameter of |analytic - central FD| / max(1, |analytic|).
pub fn max_fd_error(m: &SiameseModel, analytic: &[Vec<f64>], x: [&[f64]; 4], step: f64) -> f64 {
    let loss = |m: &SiameseModel| pair_loss(m, x[0], x[1], x[2], x[3]).unwrap().loss;
    let mut worst = 0.0f64;
    let mut probe = m.clone();
    for (li, grads) in analytic.iter().enumerate() {
        for (pi, &a) in grads.iter().enumerate() {
            let original = param(&probe, li, pi);
            set_param(&mut probe, li, pi, original + step);
            let up = loss(&probe);
            set_param(&mut probe, li, pi, original - step);
            let down = loss(&probe);
            set_param(&mut probe, li, pi, original);
            let fd = (up - down) / (2.0 * step);
            worst = worst.max((a - fd).abs() / a.abs().max(1.0));
        }
    }
    worst
}

fn param(m: &SiameseModel, layer: usize, i: usize) -> f64 {
    let l = &m.layers()[layer];
    let (nw, ne) = (l.weights.len(), l.enc_bias.len());
    if i < nw {
        l.weights[i]
    } else if i < nw + ne {
        l.enc_bias[i - nw]
    } else {
        l.dec_bias[i - nw - ne]
    }
}

fn set_param(m: &mut SiameseModel, layer: usize, i: usize, v: f64) {
    let l = &mut m.layers_mut()[layer];
    let (nw, ne) = (l.weights.len(), l.enc_bias.len());
    if i < nw {
        l.weights[i] = v;
    } else if i < nw + ne {
        l.enc_bias[i - nw] = v;
    } else {
        l.dec_bias[i - nw - ne] = v;
    }
}

/// Flattens gradients in (W, b_enc, b_dec) order per layer.
pub fn flatten(grads: &[voxel_outlier::network::LayerParams]) -> Vec<Vec<f64>> {
    grads
        .iter()
        .map(|g| {
            g.weights
                .iter()
                .chain(&g.enc_bias)
                .chain(&g.dec_bias)
                .copied()
                .collect()
        })
        .collect()
}
