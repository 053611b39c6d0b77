//! One-class SVM with an RBF kernel.
//!
//! Training solves the dual
//!
//! ```text
//! min 1/2 a^T K a   s.t.  0 <= a_i <= 1/(nu n),  sum a_i = 1
//! ```
//!
//! and the decision function is `sum_i a_i k(x_i, x) - rho`; negative scores
//! mark outliers.

mod solver;

pub use solver::{solve_dual, DualSolution, SolverOptions, SolverStats};

use crate::error::{Error, Result};

/// Coefficients at or below this are dropped from a trained model.
pub const PRUNE_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    pub gamma: f64,
}

impl KernelConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (-self.gamma * squared_distance(x, y)).exp()
    }
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-gamma |x - y|^2)`.
pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(KernelConfig::new(gamma)?.eval(x, y))
}

/// Bandwidth from the median pairwise distance `m`: `gamma = 1 / (scale * m^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MedianHeuristic {
    pub scale: f64,
}

impl Default for MedianHeuristic {
    fn default() -> Self {
        Self { scale: 2.0 }
    }
}

impl MedianHeuristic {
    pub fn gamma(&self, points: &[Vec<f64>]) -> Result<f64> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "median heuristic scale must be positive, got {}",
                self.scale
            )));
        }
        let m = median_distance(points)?;
        Ok(1.0 / (self.scale * m * m))
    }
}

/// Median of all pairwise Euclidean distances; an even count averages the two
/// central order statistics.
pub fn median_distance(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "median distance needs at least 2 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    for p in points {
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
    let mut d = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d.push(squared_distance(a, b).sqrt());
        }
    }
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let m = if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if m <= 0.0 {
        return Err(Error::DegenerateSpread);
    }
    Ok(m)
}

/// `gamma = 1 / (2 m^2)` with `m` the median pairwise distance.
pub fn median_gamma(points: &[Vec<f64>]) -> Result<f64> {
    MedianHeuristic::default().gamma(points)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcSvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub kernel: KernelConfig,
    pub nu: f64,
}

impl OcSvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `w . phi(x) - rho`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.decision_unchecked(x))
    }

    pub(crate) fn decision_unchecked(&self, x: &[f64]) -> f64 {
        let s: f64 = self
            .support_vectors
            .iter()
            .zip(&self.alphas)
            .map(|(sv, a)| a * self.kernel.eval(sv, x))
            .sum();
        s - self.rho
    }

    /// `1/2 a^T K a` over the retained support vectors.
    pub fn dual_objective(&self) -> f64 {
        let mut total = 0.0;
        for (i, (xi, ai)) in self.support_vectors.iter().zip(&self.alphas).enumerate() {
            for (xj, aj) in self.support_vectors[..i].iter().zip(&self.alphas) {
                total += 2.0 * ai * aj * self.kernel.eval(xi, xj);
            }
            total += ai * ai;
        }
        0.5 * total
    }
}

/// Trains with the default solver options.
pub fn train_ocsvm(
    x: &[Vec<f64>],
    nu: f64,
    kernel: KernelConfig,
) -> Result<(OcSvmModel, SolverStats)> {
    train_ocsvm_with(x, nu, kernel, SolverOptions::default())
}

pub fn train_ocsvm_with(
    x: &[Vec<f64>],
    nu: f64,
    kernel: KernelConfig,
    options: SolverOptions,
) -> Result<(OcSvmModel, SolverStats)> {
    let sol = solve_dual(x, nu, kernel, options)?;
    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    // Canonical order keeps the model independent of the input order.
    for &i in &sol.order {
        if sol.alphas[i] > PRUNE_THRESHOLD {
            support_vectors.push(x[i].clone());
            alphas.push(sol.alphas[i]);
        }
    }
    let model = OcSvmModel {
        support_vectors,
        alphas,
        rho: sol.rho,
        kernel,
        nu,
    };
    Ok((model, sol.stats))
}
