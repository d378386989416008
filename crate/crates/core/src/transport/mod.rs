//! Exact Wasserstein-1 distances between atomic measures and the
//! transport estimates built on them.
//!
//! The primal problem `W1(mu, nu) = min_pi sum pi_kl |z_k - z'_l|` is solved
//! exactly: equal-count uniform measures by linear assignment, anything else
//! as a transportation (min-cost flow) problem. Costs are Euclidean distances
//! in the full phase space.

pub mod assignment;
pub mod flow;

use rayon::prelude::*;

use crate::dynamics::convolve_kernel;
use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::model::{EmpiricalMeasure, Kernel};

/// Tolerance used by the weak-duality and contraction contracts.
pub const CONTRACT_TOLERANCE: f64 = 1e-10;

/// A coupling of two atomic measures, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `(k, l, pi_kl)` with `pi_kl > 0`.
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn row_marginals(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(k, _, w) in &self.entries {
            out[k] += w;
        }
        out
    }

    pub fn col_marginals(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for &(_, l, w) in &self.entries {
            out[l] += w;
        }
        out
    }

    /// `sum pi_kl |z_k - z'_l|` recomputed from the atoms.
    pub fn cost_against(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        self.entries
            .iter()
            .map(|&(k, l, w)| w * dist(mu.atom(k), nu.atom(l)))
            .sum()
    }
}

fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<f64> {
    let m = nu.len();
    let mut cost = vec![0.0; mu.len() * m];
    let fill = |(k, row): (usize, &mut [f64])| {
        let a = mu.atom(k);
        for (l, c) in row.iter_mut().enumerate() {
            *c = dist(a, nu.atom(l));
        }
    };
    if mu.len() * m >= 1 << 16 {
        cost.par_chunks_mut(m).enumerate().for_each(fill);
    } else {
        cost.chunks_mut(m).enumerate().for_each(fill);
    }
    cost
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.ambient_dim() != nu.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.ambient_dim(),
            found: nu.ambient_dim(),
        });
    }
    for w in [mu.weights(), nu.weights()] {
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > crate::model::MASS_TOLERANCE {
            return Err(Error::Unnormalized(total));
        }
    }
    Ok(())
}

/// Exact `W1(mu, nu)` together with an optimal plan.
pub fn w1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<(f64, TransportPlan)> {
    check_pair(mu, nu)?;
    let (n, m) = (mu.len(), nu.len());
    let cost = cost_matrix(mu, nu);
    if n == m && mu.is_uniform() && nu.is_uniform() {
        let (cols, total) = assignment::solve(&cost, n, n);
        let w = 1.0 / n as f64;
        let entries = cols.into_iter().enumerate().map(|(k, l)| (k, l, w)).collect();
        let d = total / n as f64;
        return Ok((d, TransportPlan { entries, cost: d }));
    }
    if mu.is_uniform() && nu.is_uniform() && n.max(m) <= REPLICATION_LIMIT {
        if m % n == 0 {
            return Ok(replicated(&cost, n, m, false));
        }
        if n % m == 0 {
            let transposed: Vec<f64> = (0..m * n).map(|idx| cost[(idx % n) * m + idx / n]).collect();
            return Ok(replicated(&transposed, m, n, true));
        }
    }
    let f = flow::solve(&cost, mu.weights(), nu.weights());
    Ok((
        f.cost,
        TransportPlan {
            entries: f.entries,
            cost: f.cost,
        },
    ))
}

/// Largest side for which uniform measures with dividing counts are
/// compared by assignment after replicating the smaller one.
const REPLICATION_LIMIT: usize = 4096;

/// Uniform `n` vs uniform `m` with `n | m`: each of the `n` atoms is split
/// into `m / n` copies of mass `1/m`, which leaves the measure unchanged,
/// and the square problem is an assignment.
fn replicated(cost: &[f64], n: usize, m: usize, transpose: bool) -> (f64, TransportPlan) {
    let rep = m / n;
    let mut square = Vec::with_capacity(m * m);
    for r in 0..m {
        square.extend_from_slice(&cost[(r / rep) * m..(r / rep + 1) * m]);
    }
    let (cols, total) = assignment::solve(&square, m, m);
    let w = 1.0 / m as f64;
    let d = total / m as f64;
    let mut entries: Vec<(usize, usize, f64)> = cols
        .into_iter()
        .enumerate()
        .map(|(r, l)| if transpose { (l, r / rep, w) } else { (r / rep, l, w) })
        .collect();
    entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    (d, TransportPlan { entries, cost: d })
}

/// Exact `W1(mu, nu)` without the plan.
pub fn w1_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    w1(mu, nu).map(|(d, _)| d)
}

/// `max_t W1(mu(t), nu(t))` over aligned node sequences.
pub fn w1_sup(mus: &[EmpiricalMeasure], nus: &[EmpiricalMeasure]) -> Result<f64> {
    if mus.len() != nus.len() {
        return Err(Error::GridMismatch(format!("{} vs {} nodes", mus.len(), nus.len())));
    }
    mus.iter()
        .zip(nus)
        .try_fold(0.0f64, |acc, (a, b)| Ok(acc.max(w1_distance(a, b)?)))
}

/// Upper bound from the independent coupling `mu x nu`.
pub fn product_coupling_bound(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let mut acc = 0.0;
    for (a, wa) in mu.atoms().zip(mu.weights()) {
        for (b, wb) in nu.atoms().zip(nu.weights()) {
            acc += wa * wb * dist(a, b);
        }
    }
    acc
}

/// Largest secant slope of `phi` over all pairs of atoms of both measures.
fn secant_slope<F: Fn(&[f64]) -> f64>(phi: &F, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let pts: Vec<&[f64]> = mu.atoms().chain(nu.atoms()).collect();
    let vals: Vec<f64> = pts.iter().map(|p| phi(p)).collect();
    let mut slope: f64 = 0.0;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let gap = dist(pts[a], pts[b]);
            if gap > 0.0 {
                slope = slope.max((vals[a] - vals[b]).abs() / gap);
            }
        }
    }
    slope
}

/// Kantorovich lower bound `max_phi |int phi d(mu - nu)|` over certified
/// 1-Lipschitz trial potentials.
pub fn w1_dual_bound(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    potentials: &[&dyn Fn(&[f64]) -> f64],
) -> Result<f64> {
    check_pair(mu, nu)?;
    let mut best: f64 = 0.0;
    for (index, phi) in potentials.iter().enumerate() {
        let slope = secant_slope(phi, mu, nu);
        if slope > 1.0 + 1e-12 {
            return Err(Error::NotLipschitz { index, slope });
        }
        best = best.max((mu.integrate(phi) - nu.integrate(phi)).abs());
    }
    Ok(best)
}

/// `(W1(E#mu, E#nu), L W1(mu, nu))` with `L` the secant Lipschitz constant
/// of `map` on the atoms of both measures. The first never exceeds the second.
pub fn pushforward_contraction_check<F>(map: F, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    check_pair(mu, nu)?;
    let pts: Vec<&[f64]> = mu.atoms().chain(nu.atoms()).collect();
    let imgs: Vec<Vec<f64>> = pts.iter().map(|p| map(p)).collect();
    let mut lip: f64 = 0.0;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let gap = dist(pts[a], pts[b]);
            if gap > 0.0 {
                lip = lip.max(dist(&imgs[a], &imgs[b]) / gap);
            }
        }
    }
    let pm = EmpiricalMeasure::weighted(&imgs[..mu.len()], mu.weights())?;
    let pn = EmpiricalMeasure::weighted(&imgs[mu.len()..], nu.weights())?;
    Ok((w1_distance(&pm, &pn)?, lip * w1_distance(mu, nu)?))
}

/// Grid of `B(0, radius)` in `R^n` with `per_axis` points per coordinate.
pub fn ball_grid(n: usize, radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let per_axis = per_axis.max(2);
    let axis: Vec<f64> = (0..per_axis)
        .map(|k| -radius + 2.0 * radius * k as f64 / (per_axis - 1) as f64)
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let p: Vec<f64> = idx.iter().map(|&k| axis[k]).collect();
        if norm(&p) <= radius * (1.0 + 1e-12) {
            out.push(p);
        }
        let mut c = 0;
        while c < n {
            idx[c] += 1;
            if idx[c] < per_axis {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
        if c == n {
            break;
        }
    }
    out
}

/// `(max_{z in grid} |H*mu(z) - H*nu(z)|, L_{rho,R} W1(mu, nu))` where
/// `L_{rho,R}` bounds the Lipschitz constant of `H` on `B(0, rho + R)`.
pub fn kernel_w1_bound_check(
    kernel: &Kernel,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    rho: f64,
    support_radius: f64,
    per_axis: usize,
) -> Result<(f64, f64)> {
    check_pair(mu, nu)?;
    let grid = ball_grid(mu.ambient_dim(), rho, per_axis);
    let mut lhs: f64 = 0.0;
    for z in &grid {
        let a = convolve_kernel(kernel, mu, z)?;
        let b = convolve_kernel(kernel, nu, z)?;
        lhs = lhs.max(dist(&a, &b));
    }
    let lip = kernel.lipschitz_bound(rho + support_radius);
    Ok((lhs, lip * w1_distance(mu, nu)?))
}
