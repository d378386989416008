//! Cost evaluation and proximal-gradient optimization over parameterized
//! admissible controls.
//!
//! The objective is
//!
//! ```text
//! J(f) = int_0^T (1/N) sum_i [ L(x_i, v_i, mu_N(t)) + psi(f(t, x_i, v_i)) ] dt
//! ```
//!
//! For `psi = gamma |.|` the optimizer splits `J = S + R` with
//! `R(p) = sum_k gamma |cell_k| |p_k|`, takes finite-difference gradient
//! steps on `S` and applies the block soft-threshold of `R` per time cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::model::{BoundFunction, ControlField, Penalty, PhaseEnsemble, Scenario, Tracking};

/// Cost of one controlled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub tracking: f64,
    pub penalty: f64,
    /// Penalty accumulated on each control cell.
    pub cell_penalties: Vec<f64>,
    /// Fraction of cells whose parameters are all zero.
    pub sparsity: f64,
}

/// Trapezoidal quadrature of the running cost along `traj`.
///
/// On each integration step the penalty uses the control cell active on
/// that step at both endpoints, so switches between cells are exact.
pub fn evaluate_cost(traj: &Trajectory, s: &Scenario, f: &ControlField) -> Result<CostBreakdown> {
    if !traj.control().same_grid(f) || traj.control().cells != f.cells {
        return Err(Error::GridMismatch(
            "trajectory was generated under a different control".into(),
        ));
    }
    if traj.dim() != s.dim {
        return Err(Error::DimensionMismatch {
            expected: s.dim,
            found: traj.dim(),
        });
    }
    let dim = s.dim;
    let n = traj.count() as f64;
    let nodes = traj.num_nodes();
    let times = traj.times();

    let running_tracking = |m: usize| -> f64 {
        match s.cost.tracking {
            Tracking::None => 0.0,
            Tracking::VelocityVariance => {
                let st = traj.state(m);
                let mean = traj.mean_velocity(m);
                let mut acc = 0.0;
                for z in st.chunks_exact(2 * dim) {
                    for c in 0..dim {
                        let dv = z[dim + c] - mean[c];
                        acc += dv * dv;
                    }
                }
                acc / n
            }
        }
    };
    let mut buf = vec![0.0; dim];
    let mut running_penalty = |m: usize, cell: usize| -> f64 {
        let c = &f.cells[cell];
        if c.is_zero() {
            return 0.0;
        }
        let mut acc = 0.0;
        for z in traj.state(m).chunks_exact(2 * dim) {
            c.eval_into(z, &mut buf);
            acc += s.cost.penalty.eval(&buf);
        }
        acc / n
    };

    let mut tracking = 0.0;
    let mut cell_penalties = vec![0.0; f.num_cells()];
    let mut prev_l = running_tracking(0);
    for m in 0..nodes - 1 {
        let h = times[m + 1] - times[m];
        let next_l = running_tracking(m + 1);
        tracking += 0.5 * h * (prev_l + next_l);
        prev_l = next_l;
        let k = traj.step_cell(m);
        cell_penalties[k] += 0.5 * h * (running_penalty(m, k) + running_penalty(m + 1, k));
    }
    let penalty: f64 = cell_penalties.iter().sum();
    Ok(CostBreakdown {
        total: tracking + penalty,
        tracking,
        penalty,
        cell_penalties,
        sparsity: f.zero_cell_fraction(),
    })
}

/// Simulates `initial` under `f` and evaluates the cost.
pub fn cost_of(s: &Scenario, initial: &PhaseEnsemble, f: &ControlField) -> Result<CostBreakdown> {
    let traj = simulate(&s.kernel, f, initial, s.steps)?;
    evaluate_cost(&traj, s, f)
}

/// Radial projection onto `{ |a_k| + |B_k| + |D_k| <= l }`, cell by cell.
pub fn project_admissible(f: &ControlField, ell: &BoundFunction) -> ControlField {
    f.project_admissible(ell)
}

/// Block soft-threshold `u max(1 - tau/|u|, 0)`, the prox of `tau |.|`.
pub fn soft_threshold(u: &[f64], tau: f64) -> Vec<f64> {
    let n = norm(u);
    if n <= tau {
        return vec![0.0; u.len()];
    }
    let scale = 1.0 - tau / n;
    u.iter().map(|x| x * scale).collect()
}

/// Finite-difference stencil for gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    Central2,
    Central4,
}

/// Finite-difference gradient of `g` at `p`; coordinates run in parallel.
pub fn fd_gradient<G>(g: &G, p: &[f64], h: f64, stencil: Stencil) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Result<f64> + Sync,
{
    (0..p.len())
        .into_par_iter()
        .map(|j| {
            let at = |offset: f64| -> Result<f64> {
                let mut q = p.to_vec();
                q[j] += offset;
                g(&q)
            };
            match stencil {
                Stencil::Central2 => Ok((at(h)? - at(-h)?) / (2.0 * h)),
                Stencil::Central4 => Ok((-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h)),
            }
        })
        .collect()
}

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative cost change fell below tolerance.
    Converged,
    /// The proximal step reproduced the current iterate.
    Stationary,
    /// Backtracking shrank the step below its floor without decrease.
    NoDescent,
    /// Evaluation budget used up after at least one accepted step.
    Budget,
    /// Budget used up with no accepted step; the incumbent is reported.
    BudgetNoProgress,
    /// Nothing to optimize.
    NoParameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub total: f64,
    pub tracking: f64,
    pub penalty: f64,
}

/// Result of [`optimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub best_control: ControlField,
    pub cost: CostSummary,
    pub sparsity: f64,
    /// Cost after every accepted step, starting with the initial iterate.
    pub iterations: Vec<f64>,
    pub evaluations: usize,
    pub termination: Termination,
    #[serde(skip)]
    pub breakdown: Option<CostBreakdown>,
}

#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    pub max_evaluations: usize,
    pub max_iterations: usize,
    pub fd_step: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub rel_tol: f64,
    /// Extra starting points; the best of these and the zero control wins.
    pub warm_starts: Vec<ControlField>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 20_000,
            max_iterations: 500,
            fd_step: 1e-5,
            initial_step: 1.0,
            min_step: 1e-12,
            rel_tol: 1e-8,
            warm_starts: Vec::new(),
        }
    }
}

/// Optimizes the scenario's own initial ensemble with default options.
pub fn optimize(s: &Scenario) -> Result<OptimizationReport> {
    optimize_with(s, &s.initial_ensemble()?, &OptimizerOptions::default())
}

/// Proximal-gradient descent from the zero control (or a better warm start).
pub fn optimize_with(s: &Scenario, initial: &PhaseEnsemble, opts: &OptimizerOptions) -> Result<OptimizationReport> {
    let template = s.zero_control();
    let per = template.params_per_cell();
    let cells = template.num_cells();
    let evals = std::sync::atomic::AtomicUsize::new(0);
    let objective = |p: &[f64]| -> Result<f64> {
        evals.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let f = template.with_params(p)?;
        Ok(cost_of(s, initial, &f)?.total)
    };

    // nonsmooth weights gamma |cell_k| when psi = gamma |.|
    let weights: Vec<f64> = match s.cost.penalty {
        Penalty::L1 { gamma } => (0..cells)
            .map(|k| gamma * (template.grid[k + 1] - template.grid[k]))
            .collect(),
        _ => vec![0.0; cells],
    };
    let split = |p: &[f64]| -> Vec<f64> {
        // gradient of R(p) = sum_k w_k |p_k|, zero at p_k = 0
        let mut g = vec![0.0; p.len()];
        if per == 0 {
            return g;
        }
        for (k, (pk, gk)) in p.chunks(per).zip(g.chunks_mut(per)).enumerate() {
            let n = norm(pk);
            if n > 0.0 {
                for (a, b) in gk.iter_mut().zip(pk) {
                    *a = weights[k] * b / n;
                }
            }
        }
        g
    };
    let prox = |u: &[f64], step: f64| -> Vec<f64> {
        if per == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(u.len());
        for (k, uk) in u.chunks(per).enumerate() {
            out.extend(soft_threshold(uk, step * weights[k]));
        }
        out
    };
    let admissible =
        |p: &[f64]| -> Result<Vec<f64>> { Ok(template.with_params(p)?.project_admissible(&s.ell).to_params()) };

    let mut p = template.to_params();
    let mut cost = objective(&p)?;
    for w in &opts.warm_starts {
        if !w.same_grid(&template) || w.parameterization != template.parameterization {
            return Err(Error::GridMismatch("warm start on a different control class".into()));
        }
        let q = w.project_admissible(&s.ell).to_params();
        let c = objective(&q)?;
        if c < cost {
            p = q;
            cost = c;
        }
    }
    let mut iterations = vec![cost];
    let mut step = opts.initial_step;
    let mut accepted = 0usize;
    let termination = if p.is_empty() {
        Termination::NoParameters
    } else {
        loop {
            if accepted >= opts.max_iterations
                || evals.load(std::sync::atomic::Ordering::Relaxed) + 2 * p.len() > opts.max_evaluations
            {
                break if accepted > 0 {
                    Termination::Budget
                } else {
                    Termination::BudgetNoProgress
                };
            }
            let mut grad = fd_gradient(&objective, &p, opts.fd_step, Stencil::Central2)?;
            for (g, r) in grad.iter_mut().zip(split(&p)) {
                *g -= r;
            }
            let mut outcome = None;
            while step >= opts.min_step {
                if evals.load(std::sync::atomic::Ordering::Relaxed) >= opts.max_evaluations {
                    outcome = Some(if accepted > 0 {
                        Termination::Budget
                    } else {
                        Termination::BudgetNoProgress
                    });
                    break;
                }
                let trial: Vec<f64> = p.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
                let candidate = admissible(&prox(&trial, step))?;
                if candidate == p {
                    outcome = Some(Termination::Stationary);
                    break;
                }
                // a blow-up under the candidate counts as no decrease
                match objective(&candidate) {
                    Ok(c) if c < cost => {
                        let rel = (cost - c) / cost.abs().max(f64::MIN_POSITIVE);
                        p = candidate;
                        cost = c;
                        iterations.push(c);
                        accepted += 1;
                        step *= 2.0;
                        if rel < opts.rel_tol {
                            outcome = Some(Termination::Converged);
                        }
                        break;
                    }
                    Ok(_) | Err(Error::NonFinite { .. }) => step *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            if step < opts.min_step && outcome.is_none() {
                outcome = Some(Termination::NoDescent);
            }
            if let Some(t) = outcome {
                break t;
            }
        }
    };

    let best = template.with_params(&p)?;
    let breakdown = cost_of(s, initial, &best)?;
    Ok(OptimizationReport {
        cost: CostSummary {
            total: breakdown.total,
            tracking: breakdown.tracking,
            penalty: breakdown.penalty,
        },
        sparsity: best.zero_cell_fraction(),
        best_control: best,
        iterations,
        evaluations: evals.into_inner(),
        termination,
        breakdown: Some(breakdown),
    })
}

/// Sparsity of a control along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub zero_cell_fraction: f64,
    /// `int_cell (1/N) sum_i |f(t, x_i, v_i)| dt` per cell.
    pub cell_masses: Vec<f64>,
}

impl SparsityReport {
    pub fn total_mass(&self) -> f64 {
        self.cell_masses.iter().sum()
    }
}

pub fn sparsity_report(f: &ControlField, traj: &Trajectory) -> Result<SparsityReport> {
    if !traj.control().same_grid(f) {
        return Err(Error::GridMismatch("control and trajectory grids differ".into()));
    }
    let dim = traj.dim();
    let n = traj.count() as f64;
    let times = traj.times();
    let mut buf = vec![0.0; dim];
    let mut mass = |m: usize, k: usize| -> f64 {
        let mut acc = 0.0;
        for z in traj.state(m).chunks_exact(2 * dim) {
            f.cells[k].eval_into(z, &mut buf);
            acc += norm(&buf);
        }
        acc / n
    };
    let mut cell_masses = vec![0.0; f.num_cells()];
    for m in 0..traj.num_nodes() - 1 {
        let k = traj.step_cell(m);
        cell_masses[k] += 0.5 * (times[m + 1] - times[m]) * (mass(m, k) + mass(m + 1, k));
    }
    Ok(SparsityReport {
        zero_cell_fraction: f.zero_cell_fraction(),
        cell_masses,
    })
}
