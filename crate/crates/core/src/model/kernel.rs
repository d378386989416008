use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{norm, op_norm};

/// Interaction map `H: R^{2d} -> R^d`.
///
/// The particle system feels `(H * mu)(z) = sum_k w_k H(z_k - z)`, so the
/// Cucker-Smale choice `H(x, v) = a(|x|) v` yields the alignment force
/// `(1/N) sum_j a(|x_j - x_i|) (v_j - v_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `H(x, v) = a(|x|) v` with rate `a(r) = k / (sigma^2 + r^2)^beta`.
    CuckerSmale {
        k: f64,
        sigma: f64,
        beta: f64,
    },
    /// `H(z) = A z + b`, `A` given as `d` rows of length `2d`.
    Affine {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Vec<f64>,
    },
    Zero,
}

impl Kernel {
    /// Cucker-Smale kernel with constant rate `a = 1`.
    pub fn unit_alignment() -> Self {
        Kernel::CuckerSmale {
            k: 1.0,
            sigma: 1.0,
            beta: 0.0,
        }
    }

    /// Communication rate as a function of the squared distance.
    #[inline]
    pub fn rate_sq(k: f64, sigma: f64, beta: f64, r2: f64) -> f64 {
        let base = sigma * sigma + r2;
        if beta == 0.0 {
            k
        } else if beta == 0.5 {
            k / base.sqrt()
        } else if beta == 1.0 {
            k / base
        } else if beta == 2.0 {
            k / (base * base)
        } else {
            k * base.powf(-beta)
        }
    }

    /// Writes `H(zj - zi)` into `out` (length `d`).
    #[inline]
    pub fn eval_difference(&self, dim: usize, zj: &[f64], zi: &[f64], out: &mut [f64]) {
        match self {
            Kernel::CuckerSmale { k, sigma, beta } => {
                let mut r2 = 0.0;
                for c in 0..dim {
                    let dx = zj[c] - zi[c];
                    r2 += dx * dx;
                }
                let a = Self::rate_sq(*k, *sigma, *beta, r2);
                for c in 0..dim {
                    out[c] = a * (zj[dim + c] - zi[dim + c]);
                }
            }
            Kernel::Affine { matrix, offset } => {
                for (c, row) in matrix.iter().enumerate() {
                    let mut acc = offset.get(c).copied().unwrap_or(0.0);
                    for (m, (a, b)) in row.iter().zip(zj.iter().zip(zi)) {
                        acc += m * (a - b);
                    }
                    out[c] = acc;
                }
            }
            Kernel::Zero => out[..dim].iter_mut().for_each(|o| *o = 0.0),
        }
    }

    /// `H(z)` for `z` in `R^{2d}`.
    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        let dim = z.len() / 2;
        let zero = vec![0.0; z.len()];
        let mut out = vec![0.0; dim];
        self.eval_difference(dim, z, &zero, &mut out);
        out
    }

    /// A constant `C` with `|H(z)| <= C (1 + |z|)` on all of `R^{2d}`.
    pub fn growth_constant(&self) -> f64 {
        match self {
            Kernel::CuckerSmale { k, sigma, beta } => Self::rate_sq(*k, *sigma, *beta, 0.0).abs(),
            Kernel::Affine { matrix, offset } => {
                let (rows, flat) = flatten(matrix);
                let cols = if rows == 0 { 0 } else { flat.len() / rows };
                op_norm(rows, cols, &flat).max(norm(offset))
            }
            Kernel::Zero => 0.0,
        }
    }

    /// Upper bound on the Lipschitz constant of `H` on `B(0, radius)`.
    pub fn lipschitz_bound(&self, radius: f64) -> f64 {
        match self {
            Kernel::CuckerSmale { k, sigma, beta } => {
                // DH = [a'(|x|) v x^T/|x|, a(|x|) I], so |DH| <= a(0) + max|a'| |v|.
                let a0 = Self::rate_sq(*k, *sigma, *beta, 0.0).abs();
                let s2 = sigma * sigma;
                let slope = if *beta == 0.0 {
                    0.0
                } else {
                    let r2 = s2 / (2.0 * beta + 1.0);
                    2.0 * beta * k.abs() * r2.sqrt() * (s2 + r2).powf(-beta - 1.0)
                };
                a0 + slope * radius
            }
            Kernel::Affine { .. } | Kernel::Zero => self.growth_constant_linear_part(),
        }
    }

    fn growth_constant_linear_part(&self) -> f64 {
        match self {
            Kernel::Affine { matrix, .. } => {
                let (rows, flat) = flatten(matrix);
                let cols = if rows == 0 { 0 } else { flat.len() / rows };
                op_norm(rows, cols, &flat)
            }
            _ => 0.0,
        }
    }

    /// Describes why the kernel is malformed for dimension `dim`, if it is.
    pub fn check(&self, dim: usize) -> Option<String> {
        match self {
            Kernel::CuckerSmale { k, sigma, beta } => {
                if !(k.is_finite() && *k > 0.0) {
                    Some(format!("kernel rate constant k = {k} must be positive"))
                } else if !(sigma.is_finite() && *sigma > 0.0) {
                    Some(format!("kernel sigma = {sigma} must be positive"))
                } else if !(beta.is_finite() && *beta >= 0.0) {
                    Some(format!("kernel beta = {beta} must be nonnegative"))
                } else {
                    None
                }
            }
            Kernel::Affine { matrix, offset } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != 2 * dim) {
                    Some(format!("kernel matrix must be {dim} x {}", 2 * dim))
                } else if !offset.is_empty() && offset.len() != dim {
                    Some(format!("kernel offset must have length {dim}"))
                } else if matrix.iter().flatten().chain(offset).any(|c| !c.is_finite()) {
                    Some("kernel coefficients must be finite".into())
                } else {
                    None
                }
            }
            Kernel::Zero => None,
        }
    }

    /// `max |H(z)| / (1 + |z|)` over random points of `B(0, radius)`.
    pub fn sampled_growth_ratio<R: Rng>(&self, dim: usize, radius: f64, samples: usize, rng: &mut R) -> f64 {
        (0..samples)
            .map(|_| {
                let z = sample_ball(2 * dim, radius, rng);
                norm(&self.eval(&z)) / (1.0 + norm(&z))
            })
            .fold(0.0, f64::max)
    }

    /// Largest secant slope of `H` over random nearby pairs in `B(0, radius)`.
    pub fn sampled_lipschitz<R: Rng>(&self, dim: usize, radius: f64, samples: usize, rng: &mut R) -> f64 {
        let mut best: f64 = 0.0;
        for s in 0..samples {
            let z1 = sample_ball(2 * dim, radius, rng);
            let scale = if s % 2 == 0 { 1e-3 * radius.max(1.0) } else { radius };
            let mut z2: Vec<f64> = z1.iter().map(|c| c + scale * (rng.random::<f64>() - 0.5)).collect();
            let n2 = norm(&z2);
            if n2 > radius {
                z2.iter_mut().for_each(|c| *c *= radius / n2);
            }
            let gap = crate::linalg::dist(&z1, &z2);
            if gap > 0.0 {
                best = best.max(crate::linalg::dist(&self.eval(&z1), &self.eval(&z2)) / gap);
            }
        }
        best
    }
}

fn flatten(matrix: &[Vec<f64>]) -> (usize, Vec<f64>) {
    (matrix.len(), matrix.iter().flatten().copied().collect())
}

/// Uniform sample from the closed ball `B(0, radius)` in `R^n`.
pub fn sample_ball<R: Rng>(n: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..n).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if norm(&z) <= radius {
            return z;
        }
    }
}
