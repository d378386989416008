use crate::error::{Error, Result};
use crate::linalg::norm;

/// Tolerance on the total mass of an [`EmpiricalMeasure`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// States `(x_i, v_i)` of `N` agents in `R^d x R^d`.
///
/// Stored agent-major: agent `i` occupies `state[i*2d .. (i+1)*2d]`, positions
/// first, so each agent's slice is directly an atom in `R^{2d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEnsemble {
    dim: usize,
    state: Vec<f64>,
}

impl PhaseEnsemble {
    /// Builds an ensemble from a flat agent-major state vector.
    pub fn from_flat(dim: usize, state: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        if state.is_empty() || state.len() % (2 * dim) != 0 {
            return Err(Error::Invalid(format!(
                "state length {} is not a positive multiple of 2d = {}",
                state.len(),
                2 * dim
            )));
        }
        if let Some(bad) = state.iter().position(|c| !c.is_finite()) {
            return Err(Error::Invalid(format!("non-finite coordinate at index {bad}")));
        }
        Ok(Self { dim, state })
    }

    /// Builds an ensemble from per-agent positions and velocities.
    pub fn new(dim: usize, positions: &[Vec<f64>], velocities: &[Vec<f64>]) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                found: velocities.len(),
            });
        }
        let mut state = Vec::with_capacity(positions.len() * 2 * dim);
        for (x, v) in positions.iter().zip(velocities) {
            for part in [x, v] {
                if part.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: part.len(),
                    });
                }
                state.extend_from_slice(part);
            }
        }
        Self::from_flat(dim, state)
    }

    /// Builds an ensemble from atoms `z_i = (x_i, v_i)` in `R^{2d}`.
    pub fn from_atoms(dim: usize, atoms: &[Vec<f64>]) -> Result<Self> {
        let mut state = Vec::with_capacity(atoms.len() * 2 * dim);
        for z in atoms {
            if z.len() != 2 * dim {
                return Err(Error::DimensionMismatch {
                    expected: 2 * dim,
                    found: z.len(),
                });
            }
            state.extend_from_slice(z);
        }
        Self::from_flat(dim, state)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.state.len() / (2 * self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.state
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.state
    }

    /// Phase point of agent `i` in `R^{2d}`.
    pub fn atom(&self, i: usize) -> &[f64] {
        let w = 2 * self.dim;
        &self.state[i * w..(i + 1) * w]
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.atom(i)[..self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.atom(i)[self.dim..]
    }

    /// `X = max_i |x_i|`.
    pub fn max_position_norm(&self) -> f64 {
        (0..self.count()).map(|i| norm(self.position(i))).fold(0.0, f64::max)
    }

    /// `V = max_i |v_i|`.
    pub fn max_velocity_norm(&self) -> f64 {
        (0..self.count()).map(|i| norm(self.velocity(i))).fold(0.0, f64::max)
    }

    /// Largest phase-space norm `max_i |(x_i, v_i)|`.
    pub fn max_phase_norm(&self) -> f64 {
        (0..self.count()).map(|i| norm(self.atom(i))).fold(0.0, f64::max)
    }

    pub fn mean_velocity(&self) -> Vec<f64> {
        mean_velocity(self.dim, &self.state)
    }

    /// The uniform empirical measure `(1/N) sum_i delta_{(x_i, v_i)}`.
    pub fn to_measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform_flat(2 * self.dim, self.state.clone())
            .expect("ensemble invariants imply a valid measure")
    }
}

/// Mean velocity of a flat agent-major state.
pub(crate) fn mean_velocity(dim: usize, state: &[f64]) -> Vec<f64> {
    let w = 2 * dim;
    let n = state.len() / w;
    let mut mean = vec![0.0; dim];
    for agent in state.chunks_exact(w) {
        for (m, v) in mean.iter_mut().zip(&agent[dim..]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

/// Weighted atomic probability measure on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    ambient: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Atoms given as a flat row-major buffer with explicit weights.
    pub fn new_flat(ambient: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if ambient == 0 {
            return Err(Error::Invalid("ambient dimension must be positive".into()));
        }
        if atoms.len() != weights.len() * ambient || weights.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * ambient,
                found: atoms.len(),
            });
        }
        if atoms.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("non-finite atom coordinate".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Invalid("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Unnormalized(total));
        }
        Ok(Self {
            ambient,
            atoms,
            weights,
        })
    }

    /// Equal weights `1/N`.
    pub fn uniform_flat(ambient: usize, atoms: Vec<f64>) -> Result<Self> {
        if ambient == 0 || atoms.is_empty() || atoms.len() % ambient != 0 {
            return Err(Error::Invalid(
                "atom buffer is not a positive multiple of the dimension".into(),
            ));
        }
        let n = atoms.len() / ambient;
        Self::new_flat(ambient, atoms, vec![1.0 / n as f64; n])
    }

    pub fn uniform(atoms: &[Vec<f64>]) -> Result<Self> {
        let n = atoms.len();
        Self::weighted(atoms, &vec![1.0 / n.max(1) as f64; n])
    }

    pub fn weighted(atoms: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let ambient = atoms.first().map(Vec::len).unwrap_or(0);
        let mut flat = Vec::with_capacity(atoms.len() * ambient);
        for a in atoms {
            if a.len() != ambient {
                return Err(Error::DimensionMismatch {
                    expected: ambient,
                    found: a.len(),
                });
            }
            flat.extend_from_slice(a);
        }
        Self::new_flat(ambient, flat, weights.to_vec())
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k * self.ambient..(k + 1) * self.ambient]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[f64]> {
        self.atoms.chunks_exact(self.ambient)
    }

    pub fn flat_atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every weight equals `1/N` to rounding.
    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-15)
    }

    pub fn support_radius(&self) -> f64 {
        self.atoms().map(norm).fold(0.0, f64::max)
    }

    /// Integral of `phi` against the measure.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, phi: F) -> f64 {
        self.atoms().zip(&self.weights).map(|(z, w)| w * phi(z)).sum()
    }

    pub fn first_moment(&self) -> f64 {
        self.integrate(norm)
    }

    /// Image measure under `map`, same weights.
    pub fn push_forward<F: Fn(&[f64]) -> Vec<f64>>(&self, map: F) -> Result<Self> {
        let mut out = Vec::with_capacity(self.atoms.len());
        let mut ambient = None;
        for z in self.atoms() {
            let y = map(z);
            if *ambient.get_or_insert(y.len()) != y.len() {
                return Err(Error::Invalid("push-forward map changes output dimension".into()));
            }
            out.extend(y);
        }
        Self::new_flat(ambient.unwrap_or(0), out, self.weights.clone())
    }

    /// Shifts every atom by `c`.
    pub fn translate(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.ambient {
            return Err(Error::DimensionMismatch {
                expected: self.ambient,
                found: c.len(),
            });
        }
        self.push_forward(|z| z.iter().zip(c).map(|(a, b)| a + b).collect())
    }

    /// Reads a phase ensemble back out of a uniform measure on `R^{2d}`.
    pub fn to_ensemble(&self) -> Result<PhaseEnsemble> {
        if self.ambient % 2 != 0 {
            return Err(Error::Invalid(format!(
                "ambient dimension {} is not even",
                self.ambient
            )));
        }
        if !self.is_uniform() {
            return Err(Error::Invalid(
                "interacting particle systems require equal atom weights".into(),
            ));
        }
        PhaseEnsemble::from_flat(self.ambient / 2, self.atoms.clone())
    }
}
