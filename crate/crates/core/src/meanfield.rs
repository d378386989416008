//! Measure-valued solutions of the controlled kinetic equation
//!
//! ```text
//! d/dt mu + v . grad_x mu = div_v [ (H * mu + f) mu ]
//! ```
//!
//! For atomic initial data the push-forward along characteristics,
//! `mu(t) = (T_t)# mu_0`, coincides with the particle system, so every
//! measure trajectory here is produced by [`crate::dynamics::simulate`].

use crate::dynamics::{convolve_kernel, simulate, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::model::{digest_str, ControlField, EmpiricalMeasure, Kernel, Scenario};
use crate::transport::w1_distance;

/// Atomic measures on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureTrajectory {
    pub times: Vec<f64>,
    pub measures: Vec<EmpiricalMeasure>,
    /// Number of atoms, the discretization level.
    pub level: usize,
    pub scenario_hash: String,
    pub control_hash: String,
}

impl MeasureTrajectory {
    pub fn from_trajectory(tr: &Trajectory, scenario_hash: String) -> Self {
        let control_hash = digest_str(&serde_json::to_string(tr.control()).expect("serializable"));
        Self {
            times: tr.times().to_vec(),
            measures: (0..tr.num_nodes()).map(|m| tr.measure(m)).collect(),
            level: tr.count(),
            scenario_hash,
            control_hash,
        }
    }

    /// Index of the node at time `t`.
    pub fn node_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-12 * self.times.last().unwrap().max(1.0))
            .ok_or(Error::NotOnGrid(t))
    }

    pub fn support_radius(&self) -> f64 {
        self.measures
            .iter()
            .map(EmpiricalMeasure::support_radius)
            .fold(0.0, f64::max)
    }

    /// Largest `W1(mu(t_m), mu(t_{m+1})) / (t_{m+1} - t_m)` over adjacent nodes.
    pub fn time_lipschitz(&self) -> Result<f64> {
        let mut best: f64 = 0.0;
        for m in 0..self.times.len() - 1 {
            let d = w1_distance(&self.measures[m], &self.measures[m + 1])?;
            best = best.max(d / (self.times[m + 1] - self.times[m]));
        }
        Ok(best)
    }
}

/// The characteristic field `w(t, x, v) = (v, H*mu(t)(x, v) + f(t, x, v))`.
pub struct VelocityField<'a> {
    pub kernel: &'a Kernel,
    pub measure: &'a EmpiricalMeasure,
    pub control: &'a ControlField,
    pub t: f64,
}

impl VelocityField<'_> {
    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        let dim = z.len() / 2;
        let force = convolve_kernel(self.kernel, self.measure, z)?;
        let f = self.control.eval(self.t, z);
        let mut out = z[dim..].to_vec();
        out.extend(force.iter().zip(&f).map(|(a, b)| a + b));
        Ok(out)
    }
}

/// Push-forward of the atomic `mu0` along the characteristics of `s` under `f`.
pub fn solve_meanfield(mu0: &EmpiricalMeasure, s: &Scenario, f: &ControlField) -> Result<MeasureTrajectory> {
    let initial = mu0.to_ensemble()?;
    if initial.dim() != s.dim {
        return Err(Error::DimensionMismatch {
            expected: 2 * s.dim,
            found: mu0.ambient_dim(),
        });
    }
    let tr = simulate(&s.kernel, f, &initial, s.steps)?;
    Ok(MeasureTrajectory::from_trajectory(&tr, s.digest()))
}

/// A smooth test function with its gradient, for weak-form checks.
pub trait TestFunction {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
}

/// `zeta = c`.
pub struct Constant(pub f64);

/// `zeta(z) = z_k`.
pub struct Coordinate(pub usize);

/// `zeta(x, v) = |v|^2`.
pub struct VelocityEnergy;

/// `zeta(z) = |z - c|^2`.
pub struct Quadratic(pub Vec<f64>);

/// `zeta(z) = exp(1 - 1/(1 - |z - c|^2/r^2))` inside `B(c, r)`, zero outside.
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl TestFunction for Constant {
    fn value(&self, _: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        vec![0.0; z.len()]
    }
}

impl TestFunction for Coordinate {
    fn value(&self, z: &[f64]) -> f64 {
        z[self.0]
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; z.len()];
        g[self.0] = 1.0;
        g
    }
}

impl TestFunction for VelocityEnergy {
    fn value(&self, z: &[f64]) -> f64 {
        let v = &z[z.len() / 2..];
        dot(v, v)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len() / 2;
        let mut g = vec![0.0; z.len()];
        for c in 0..d {
            g[d + c] = 2.0 * z[d + c];
        }
        g
    }
}

impl TestFunction for Quadratic {
    fn value(&self, z: &[f64]) -> f64 {
        z.iter().zip(&self.0).map(|(a, c)| (a - c) * (a - c)).sum()
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.0).map(|(a, c)| 2.0 * (a - c)).collect()
    }
}

impl Bump {
    fn ratio(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        r2 / (self.radius * self.radius)
    }
}

impl TestFunction for Bump {
    fn value(&self, z: &[f64]) -> f64 {
        let s = self.ratio(z);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s)).exp()
        }
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let s = self.ratio(z);
        if s >= 1.0 {
            return vec![0.0; z.len()];
        }
        // d/dz exp(1 - 1/(1-s)) = value * (-1/(1-s)^2) * ds/dz, ds/dz = 2(z-c)/r^2
        let scale = -self.value(z) / ((1.0 - s) * (1.0 - s)) * 2.0 / (self.radius * self.radius);
        z.iter().zip(&self.center).map(|(a, c)| scale * (a - c)).collect()
    }
}

/// Residual of the weak formulation at node time `t`:
///
/// `<zeta, mu(t)> - <zeta, mu(0)> - int_0^t int [grad_x zeta . v + grad_v zeta . (H*mu + f)] dmu ds`
///
/// The time integral is trapezoidal on the trajectory grid, each step using
/// the control cell active on it.
pub fn weak_form_residual(
    mt: &MeasureTrajectory,
    s: &Scenario,
    f: &ControlField,
    zeta: &dyn TestFunction,
    t: f64,
) -> Result<f64> {
    let last = mt.node_of(t)?;
    let kernel = &s.kernel;
    let integrand = |m: usize, t_eval: f64| -> Result<f64> {
        let mu = &mt.measures[m];
        let field = VelocityField {
            kernel,
            measure: mu,
            control: f,
            t: t_eval,
        };
        let mut acc = 0.0;
        for (z, w) in mu.atoms().zip(mu.weights()) {
            acc += w * dot(&zeta.gradient(z), &field.eval(z)?);
        }
        Ok(acc)
    };
    let mut flux = 0.0;
    for m in 0..last {
        let (t0, t1) = (mt.times[m], mt.times[m + 1]);
        // the control is read at the step midpoint so both ends see the same cell
        let mid = 0.5 * (t0 + t1);
        flux += 0.5 * (t1 - t0) * (integrand(m, mid)? + integrand(m + 1, mid)?);
    }
    let start = mt.measures[0].integrate(|z| zeta.value(z));
    let end = mt.measures[last].integrate(|z| zeta.value(z));
    Ok(end - start - flux)
}

/// Measured and certified stability curves for two initial measures.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    /// `W1(mu(t), nu(t))` at every node.
    pub measured: Vec<f64>,
    /// `exp(int_0^t delta) W1(mu_0, nu_0)` at every node.
    pub bound: Vec<f64>,
    /// Radius `R` containing both trajectories.
    pub radius: f64,
    /// Lipschitz bound of `H` on `B(0, 2R)`.
    pub kernel_lipschitz: f64,
}

impl StabilityReport {
    pub fn holds(&self) -> bool {
        self.measured
            .iter()
            .zip(&self.bound)
            .all(|(m, b)| *m <= *b * (1.0 + 1e-9) + 1e-12)
    }
}

/// Evolves `mu0` and `nu0` under the same control and compares
/// `W1(mu(t), nu(t))` with the Gronwall bound `exp(int delta) W1(mu0, nu0)`,
/// `delta(t) = 1 + 2 Lip(H, B(0, 2R)) + Lip(f(t, .))`.
///
/// Both trajectories stay in `B(0, R)`; `R` is their observed support
/// radius on the grid, widened by a safety margin.
pub fn stability_check(
    mu0: &EmpiricalMeasure,
    nu0: &EmpiricalMeasure,
    s: &Scenario,
    f: &ControlField,
) -> Result<StabilityReport> {
    let a = solve_meanfield(mu0, s, f)?;
    let b = solve_meanfield(nu0, s, f)?;
    let radius = 1.05 * a.support_radius().max(b.support_radius());
    let kernel_lipschitz = s.kernel.lipschitz_bound(2.0 * radius);
    let w0 = w1_distance(mu0, nu0)?;
    let mut measured = Vec::with_capacity(a.times.len());
    let mut bound = Vec::with_capacity(a.times.len());
    let mut exponent = 0.0;
    for m in 0..a.times.len() {
        if m > 0 {
            let dt = a.times[m] - a.times[m - 1];
            let cell = &f.cells[f.cell_index(0.5 * (a.times[m] + a.times[m - 1]))];
            exponent += dt * (1.0 + 2.0 * kernel_lipschitz + cell.lipschitz());
        }
        measured.push(w1_distance(&a.measures[m], &b.measures[m])?);
        bound.push(exponent.exp() * w0);
    }
    Ok(StabilityReport {
        times: a.times,
        measured,
        bound,
        radius,
        kernel_lipschitz,
    })
}

/// Velocity marginal of a measure on `R^{2d}`.
pub fn velocity_marginal(mu: &EmpiricalMeasure) -> EmpiricalMeasure {
    let d = mu.ambient_dim() / 2;
    let atoms: Vec<Vec<f64>> = mu.atoms().map(|z| z[d..].to_vec()).collect();
    EmpiricalMeasure::weighted(&atoms, mu.weights()).expect("marginal of a valid measure")
}

/// `W1` between the velocity marginal and the point mass at its mean.
pub fn velocity_spread(mu: &EmpiricalMeasure) -> f64 {
    let vel = velocity_marginal(mu);
    let d = vel.ambient_dim();
    let mut mean = vec![0.0; d];
    for (z, w) in vel.atoms().zip(vel.weights()) {
        for c in 0..d {
            mean[c] += w * z[c];
        }
    }
    vel.integrate(|v| norm(&v.iter().zip(&mean).map(|(a, b)| a - b).collect::<Vec<_>>()))
}
