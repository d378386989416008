use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{BoundFunction, ControlCell, ControlField, CostSpec, Kernel, Parameterization, PhaseEnsemble};
use crate::error::{Error, Result};
use crate::linalg::norm;

/// Initial data: explicit atoms or a seeded sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialSpec {
    /// Atoms `(x_i, v_i)` in `R^{2d}`, used verbatim.
    Explicit { atoms: Vec<Vec<f64>> },
    /// Uniform on `[low, high]^{2d}`, restricted to the confinement ball.
    UniformBox {
        low: f64,
        high: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Isotropic Gaussian truncated to the confinement ball.
    TruncatedGaussian {
        mean: Vec<f64>,
        std: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl InitialSpec {
    pub fn seed(&self) -> u64 {
        match self {
            InitialSpec::Explicit { .. } => 0,
            InitialSpec::UniformBox { seed, .. } | InitialSpec::TruncatedGaussian { seed, .. } => *seed,
        }
    }
}

/// Draws an initial ensemble of `count` agents inside `B(0, radius)`.
///
/// Explicit atoms are passed through unchanged and ignore `count` and `seed`.
pub fn sample_initial(spec: &InitialSpec, dim: usize, count: usize, radius: f64, seed: u64) -> Result<PhaseEnsemble> {
    if !(radius > 0.0) {
        return Err(Error::Invalid(format!("support radius {radius} must be positive")));
    }
    let n = 2 * dim;
    let draw: Box<dyn Fn(&mut ChaCha8Rng) -> Vec<f64>> = match spec {
        InitialSpec::Explicit { atoms } => return PhaseEnsemble::from_atoms(dim, atoms),
        InitialSpec::UniformBox { low, high, .. } => {
            if !(high > low) {
                return Err(Error::Invalid(format!("empty box [{low}, {high}]")));
            }
            let (low, high) = (*low, *high);
            Box::new(move |rng| (0..n).map(|_| rng.random_range(low..high)).collect())
        }
        InitialSpec::TruncatedGaussian { mean, std, .. } => {
            if mean.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: mean.len(),
                });
            }
            let (mean, std) = (mean.clone(), *std);
            Box::new(move |rng| {
                mean.iter()
                    .map(|m| m + std * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 1000 * count + 10_000;
    let mut state = Vec::with_capacity(count * n);
    let mut attempts = 0;
    while state.len() < count * n {
        if attempts == budget {
            return Err(Error::Sampling {
                attempts,
                reason: format!("sampler mass inside B(0, {radius}) is too small"),
            });
        }
        attempts += 1;
        let z = draw(&mut rng);
        if norm(&z) <= radius {
            state.extend(z);
        }
    }
    PhaseEnsemble::from_flat(dim, state)
}

/// The control family searched by the optimizer, with optional fixed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub parameterization: Parameterization,
    pub cells: usize,
    /// Explicit per-cell parameters; zero control when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<ControlCell>>,
}

/// Everything needed to pose one finite-dimensional control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dim: usize,
    pub agents: usize,
    pub horizon: f64,
    pub steps: usize,
    pub kernel: Kernel,
    pub cost: CostSpec,
    pub ell: BoundFunction,
    pub initial: InitialSpec,
    pub control: ControlSpec,
    pub confinement_radius: f64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Stable short digest of the scenario contents.
    pub fn digest(&self) -> String {
        digest_str(&serde_json::to_string(self).expect("scenario serializes"))
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        super::uniform_grid(self.horizon, self.control.cells)
    }

    /// The fixed control described by the scenario (zero when no values).
    pub fn control_field(&self) -> Result<ControlField> {
        match &self.control.values {
            None => Ok(ControlField::zero(self.dim, self.control.parameterization, self.grid())),
            Some(cells) => ControlField::new(self.dim, self.grid(), self.control.parameterization, cells.clone()),
        }
    }

    pub fn zero_control(&self) -> ControlField {
        ControlField::zero(self.dim, self.control.parameterization, self.grid())
    }

    pub fn initial_ensemble(&self) -> Result<PhaseEnsemble> {
        self.sample_agents(self.agents, self.initial.seed())
    }

    pub fn sample_agents(&self, count: usize, seed: u64) -> Result<PhaseEnsemble> {
        sample_initial(&self.initial, self.dim, count, self.confinement_radius, seed)
    }
}

pub(crate) fn digest_str(s: &str) -> String {
    let mut h = DefaultHasher::new();
    s.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Every violated invariant of the scenario, in a fixed order. Empty means valid.
pub fn validate_scenario(s: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    if s.dim == 0 {
        out.push("dim must be at least 1".into());
        return out;
    }
    if s.agents == 0 {
        out.push("agents must be at least 1".into());
    }
    if !(s.horizon.is_finite() && s.horizon > 0.0) {
        out.push(format!("horizon {} must be positive", s.horizon));
    }
    if s.steps == 0 {
        out.push("steps must be at least 1".into());
    }
    if s.control.cells == 0 {
        out.push("control needs at least one cell".into());
    } else if s.steps % s.control.cells != 0 {
        out.push(format!(
            "steps {} not divisible by control cells {}",
            s.steps, s.control.cells
        ));
    }
    let r0 = s.confinement_radius;
    if !(r0.is_finite() && r0 > 0.0) {
        out.push(format!("confinement radius {r0} must be positive"));
    }

    if let Some(msg) = s.kernel.check(s.dim) {
        out.push(msg);
    } else if r0 > 0.0 {
        let c = s.kernel.growth_constant();
        if s.kernel.sampled_growth_ratio(s.dim, r0, 256, &mut rng) > c * (1.0 + 1e-12) {
            out.push("kernel growth".into());
        }
    }

    out.extend(s.cost.violations(s.dim, &mut rng));

    if s.ell.values.is_empty() {
        out.push("ℓ needs at least one value".into());
    }
    for (k, v) in s.ell.values.iter().enumerate() {
        if !(v.is_finite() && *v >= 0.0) {
            out.push(format!("ℓ nonnegativity cell {k}"));
        }
    }
    if !(s.ell.exponent >= 1.0) {
        out.push(format!("ℓ exponent {} must be at least 1", s.ell.exponent));
    }

    if s.control.cells > 0 && !s.ell.values.is_empty() && s.horizon > 0.0 {
        match s.control_field() {
            Err(e) => out.push(format!("control: {e}")),
            Ok(f) => out.extend(
                f.admissibility_violations(&s.ell)
                    .into_iter()
                    .map(|k| format!("admissibility cell {k}")),
            ),
        }
    }

    match &s.initial {
        InitialSpec::Explicit { atoms } => {
            if atoms.len() != s.agents {
                out.push(format!("{} explicit atoms for {} agents", atoms.len(), s.agents));
            }
            for (i, z) in atoms.iter().enumerate() {
                if z.len() != 2 * s.dim {
                    out.push(format!("initial atom {i} has length {}", z.len()));
                } else if !(norm(z) <= r0) {
                    out.push(format!("initial atom {i} outside B(0, R_0)"));
                }
            }
        }
        InitialSpec::UniformBox { low, high, .. } => {
            if !(high > low) {
                out.push(format!("initial box [{low}, {high}] is empty"));
            }
        }
        InitialSpec::TruncatedGaussian { mean, std, .. } => {
            if mean.len() != 2 * s.dim {
                out.push(format!("initial mean has length {}", mean.len()));
            }
            if !(std.is_finite() && *std > 0.0) {
                out.push(format!("initial std {std} must be positive"));
            }
        }
    }
    out
}
