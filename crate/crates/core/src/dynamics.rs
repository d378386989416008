//! Integration of the controlled particle system
//!
//! ```text
//! x_i' = v_i,
//! v_i' = (H * mu_N)(x_i, v_i) + f(t, x_i, v_i),
//! ```
//!
//! with classical RK4, plus the a priori bounds that confine its solutions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{BoundFunction, ControlCell, ControlField, EmpiricalMeasure, Kernel, PhaseEnsemble, Scenario};

/// Agent count above which force evaluation fans out over threads.
const PARALLEL_THRESHOLD: usize = 48;

/// `(H * mu)(z) = sum_k w_k H(z_k - z)`.
pub fn convolve_kernel(kernel: &Kernel, mu: &EmpiricalMeasure, z: &[f64]) -> Result<Vec<f64>> {
    if mu.ambient_dim() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.ambient_dim(),
            found: z.len(),
        });
    }
    if z.len() % 2 != 0 {
        return Err(Error::Invalid(format!("phase point of odd length {}", z.len())));
    }
    let dim = z.len() / 2;
    if let Some(msg) = kernel.check(dim) {
        return Err(Error::Invalid(msg));
    }
    let mut acc = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for (zk, w) in mu.atoms().zip(mu.weights()) {
        kernel.eval_difference(dim, zk, z, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += w * b;
        }
    }
    Ok(acc)
}

/// Time derivative of the whole agent-major state under one control cell.
pub fn rhs(kernel: &Kernel, cell: &ControlCell, dim: usize, state: &[f64], deriv: &mut [f64]) {
    let w = 2 * dim;
    let n = state.len() / w;
    let per_agent = |(i, out): (usize, &mut [f64])| {
        let zi = &state[i * w..(i + 1) * w];
        out[..dim].copy_from_slice(&zi[dim..]);
        let mut acc = [0.0f64; 8];
        let mut buf = [0.0f64; 8];
        let (acc, buf) = if dim <= 8 {
            (&mut acc[..dim], &mut buf[..dim])
        } else {
            // rare: large dimension, fall back to the heap
            return rhs_agent_heap(kernel, cell, dim, state, zi, out);
        };
        interaction_sum(kernel, dim, state, zi, acc, buf);
        let inv = 1.0 / n as f64;
        cell.eval_into(zi, buf);
        for c in 0..dim {
            out[dim + c] = acc[c] * inv + buf[c];
        }
    };
    if n >= PARALLEL_THRESHOLD {
        deriv.par_chunks_mut(w).enumerate().for_each(per_agent);
    } else {
        deriv.chunks_mut(w).enumerate().for_each(per_agent);
    }
}

fn rhs_agent_heap(kernel: &Kernel, cell: &ControlCell, dim: usize, state: &[f64], zi: &[f64], out: &mut [f64]) {
    let n = state.len() / (2 * dim);
    let mut acc = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    interaction_sum(kernel, dim, state, zi, &mut acc, &mut buf);
    cell.eval_into(zi, &mut buf);
    for c in 0..dim {
        out[dim + c] = acc[c] / n as f64 + buf[c];
    }
}

/// `acc = sum_j H(z_j - z_i)` in agent order.
#[inline]
fn interaction_sum(kernel: &Kernel, dim: usize, state: &[f64], zi: &[f64], acc: &mut [f64], buf: &mut [f64]) {
    acc.iter_mut().for_each(|a| *a = 0.0);
    match *kernel {
        Kernel::Zero => {}
        Kernel::CuckerSmale { k, sigma, beta } => {
            for zj in state.chunks_exact(2 * dim) {
                let mut r2 = 0.0;
                for c in 0..dim {
                    let dx = zj[c] - zi[c];
                    r2 += dx * dx;
                }
                let a = Kernel::rate_sq(k, sigma, beta, r2);
                for c in 0..dim {
                    acc[c] += a * (zj[dim + c] - zi[dim + c]);
                }
            }
        }
        Kernel::Affine { .. } => {
            for zj in state.chunks_exact(2 * dim) {
                kernel.eval_difference(dim, zj, zi, buf);
                for c in 0..dim {
                    acc[c] += buf[c];
                }
            }
        }
    }
}

/// Node-sampled solution of the particle system.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    node_controls: Vec<Vec<f64>>,
    step_cells: Vec<usize>,
    control: ControlField,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.states[0].len() / (2 * self.dim)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn num_nodes(&self) -> usize {
        self.times.len()
    }

    /// Flat agent-major state at node `m`.
    pub fn state(&self, m: usize) -> &[f64] {
        &self.states[m]
    }

    pub fn ensemble(&self, m: usize) -> PhaseEnsemble {
        PhaseEnsemble::from_flat(self.dim, self.states[m].clone()).expect("finite states")
    }

    pub fn measure(&self, m: usize) -> EmpiricalMeasure {
        self.ensemble(m).to_measure()
    }

    pub fn final_ensemble(&self) -> PhaseEnsemble {
        self.ensemble(self.times.len() - 1)
    }

    /// `f(t_m, x_i, v_i)` for every agent, flat `N x d`.
    pub fn node_controls(&self, m: usize) -> &[f64] {
        &self.node_controls[m]
    }

    /// Control cell active on the step `[t_m, t_{m+1}]`.
    pub fn step_cell(&self, m: usize) -> usize {
        self.step_cells[m]
    }

    pub fn control(&self) -> &ControlField {
        &self.control
    }

    /// Largest phase-space norm over all agents and nodes.
    pub fn max_phase_norm(&self) -> f64 {
        (0..self.times.len())
            .map(|m| self.ensemble(m).max_phase_norm())
            .fold(0.0, f64::max)
    }

    pub fn mean_velocity(&self, m: usize) -> Vec<f64> {
        crate::model::mean_velocity(self.dim, &self.states[m])
    }

    /// Subsample every `stride`-th node, always keeping the last one.
    pub fn node_indices(&self, stride: usize) -> Vec<usize> {
        let last = self.times.len() - 1;
        let mut idx: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
        if *idx.last().unwrap() != last {
            idx.push(last);
        }
        idx
    }
}

/// Integrates from `initial` under `control` with `steps` RK4 steps.
///
/// `steps` must be a multiple of the number of control cells; each cell is
/// split into equal sub-steps so control switches land on step boundaries.
pub fn simulate(kernel: &Kernel, control: &ControlField, initial: &PhaseEnsemble, steps: usize) -> Result<Trajectory> {
    let dim = initial.dim();
    if control.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: control.dim(),
        });
    }
    if let Some(msg) = kernel.check(dim) {
        return Err(Error::Invalid(msg));
    }
    let cells = control.num_cells();
    if steps == 0 || steps % cells != 0 {
        return Err(Error::GridMismatch(format!(
            "{steps} steps cannot be split over {cells} control cells"
        )));
    }
    let per_cell = steps / cells;
    let len = initial.as_flat().len();

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut step_cells = Vec::with_capacity(steps);
    times.push(0.0);
    states.push(initial.as_flat().to_vec());

    let mut y = initial.as_flat().to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
    );
    for (k, cell) in control.cells.iter().enumerate() {
        let (t0, t1) = (control.grid[k], control.grid[k + 1]);
        let h = (t1 - t0) / per_cell as f64;
        for s in 0..per_cell {
            rhs(kernel, cell, dim, &y, &mut k1);
            axpy(&y, 0.5 * h, &k1, &mut tmp);
            rhs(kernel, cell, dim, &tmp, &mut k2);
            axpy(&y, 0.5 * h, &k2, &mut tmp);
            rhs(kernel, cell, dim, &tmp, &mut k3);
            axpy(&y, h, &k3, &mut tmp);
            rhs(kernel, cell, dim, &tmp, &mut k4);
            for i in 0..len {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let step = k * per_cell + s;
            if y.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite { step });
            }
            times.push(if s + 1 == per_cell { t1 } else { t0 + (s + 1) as f64 * h });
            states.push(y.clone());
            step_cells.push(k);
        }
    }

    let node_controls = times
        .iter()
        .zip(&states)
        .map(|(t, st)| {
            let cell = &control.cells[control.cell_index(*t)];
            let mut out = vec![0.0; st.len() / 2];
            for (z, o) in st.chunks_exact(2 * dim).zip(out.chunks_exact_mut(dim)) {
                cell.eval_into(z, o);
            }
            out
        })
        .collect();

    Ok(Trajectory {
        dim,
        times,
        states,
        node_controls,
        step_cells,
        control: control.clone(),
    })
}

#[inline]
fn axpy(y: &[f64], a: f64, x: &[f64], out: &mut [f64]) {
    for ((o, yi), xi) in out.iter_mut().zip(y).zip(x) {
        *o = yi + a * xi;
    }
}

/// Integrates the scenario's own initial data under `f`.
pub fn integrate(s: &Scenario, f: &ControlField) -> Result<Trajectory> {
    simulate(&s.kernel, f, &s.initial_ensemble()?, s.steps)
}

/// Integrates `initial` with the scenario's kernel and step count.
pub fn integrate_from(s: &Scenario, f: &ControlField, initial: &PhaseEnsemble) -> Result<Trajectory> {
    simulate(&s.kernel, f, initial, s.steps)
}

/// A priori bound on the speeds `max_i |v_i(t)|` on `[0, T]`:
///
/// `V_T = {V0 + (1 + X0)(2 C T + int l)} exp((1 + T) int (2C + l))`.
pub fn velocity_bound(x0: f64, v0: f64, c: f64, ell: &BoundFunction, horizon: f64) -> f64 {
    let int_ell = ell.integral(horizon, horizon);
    let forcing = 2.0 * c * horizon + int_ell;
    (v0 + (1.0 + x0) * forcing) * ((1.0 + horizon) * forcing).exp()
}

/// Radius of a phase-space ball containing every trajectory on `[0, T]`:
/// `R_T = X0 + T V_T + V_T`. Independent of the number of agents.
pub fn support_bound(x0: f64, v0: f64, c: f64, ell: &BoundFunction, horizon: f64) -> f64 {
    let vt = velocity_bound(x0, v0, c, ell, horizon);
    x0 + horizon * vt + vt
}

/// Growth constant used for confinement: the analytic kernel constant,
/// raised if sampling on `B(0, 2 R_0)` ever exceeds it.
pub fn scenario_growth_constant(s: &Scenario) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
    let sampled = s
        .kernel
        .sampled_growth_ratio(s.dim, 2.0 * s.confinement_radius, 512, &mut rng);
    s.kernel.growth_constant().max(sampled)
}

/// Confinement radius for a concrete initial ensemble in scenario `s`.
pub fn confinement_radius(s: &Scenario, initial: &PhaseEnsemble) -> f64 {
    support_bound(
        initial.max_position_norm(),
        initial.max_velocity_norm(),
        scenario_growth_constant(s),
        &s.ell,
        s.horizon,
    )
}

/// `(|y0| + int_0^t m) exp(int_0^t m)` for `|g(t, y)| <= m(t)(1 + |y|)`.
pub fn gronwall_growth_bound(y0_norm: f64, m: &BoundFunction, horizon: f64, t: f64) -> f64 {
    let mass = m.integral(t, horizon);
    (y0_norm + mass) * mass.exp()
}
