use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat_vec_add, norm, op_norm};

/// Piecewise-constant bound `l(t)` on a uniform grid over `[0, T]`.
///
/// Admissible controls satisfy `|f(t,0)| + Lip(f(t,.)) <= l(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFunction {
    pub values: Vec<f64>,
    /// Integrability exponent `q` of `l`.
    #[serde(default = "one")]
    pub exponent: f64,
}

fn one() -> f64 {
    1.0
}

impl BoundFunction {
    pub fn constant(value: f64) -> Self {
        Self {
            values: vec![value],
            exponent: 1.0,
        }
    }

    fn cell_width(&self, horizon: f64) -> f64 {
        horizon / self.values.len() as f64
    }

    fn cell_of(&self, t: f64, horizon: f64) -> usize {
        let k = (t / self.cell_width(horizon)).floor();
        (k.max(0.0) as usize).min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64, horizon: f64) -> f64 {
        self.values[self.cell_of(t, horizon)]
    }

    /// `int_0^t l(s) ds`, exact.
    pub fn integral(&self, t: f64, horizon: f64) -> f64 {
        self.integral_with(t, horizon, |v| v)
    }

    /// `int_0^t g(l(s)) ds` for a pointwise transform `g`.
    pub fn integral_with<G: Fn(f64) -> f64>(&self, t: f64, horizon: f64, g: G) -> f64 {
        let h = self.cell_width(horizon);
        let t = t.clamp(0.0, horizon);
        let mut acc = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let lo = k as f64 * h;
            if lo >= t {
                break;
            }
            let hi = ((k + 1) as f64 * h).min(t);
            acc += g(*v) * (hi - lo);
        }
        acc
    }

    /// Smallest value of `l` on cells overlapping `[t0, t1)`.
    pub fn infimum_on(&self, t0: f64, t1: f64, horizon: f64) -> f64 {
        let h = self.cell_width(horizon);
        let first = self.cell_of(t0, horizon);
        let mut last = self.cell_of(t1, horizon);
        // t1 sitting exactly on a boundary does not reach into the next cell
        if last > first && (t1 - last as f64 * h).abs() <= 1e-12 * horizon.max(1.0) {
            last -= 1;
        }
        self.values[first..=last].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// The same function with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            exponent: self.exponent,
        }
    }
}

/// Relative slack on `|a| + |B| + |D| <= l` absorbing rounding in the norms.
pub const ADMISSIBILITY_TOLERANCE: f64 = 1e-12;

/// Finite-dimensional families of admissible feedback fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    Zero,
    /// `f(t,x,v) = a_k`.
    Constant,
    /// `f(t,x,v) = a_k + B_k v`; depends on the velocity only.
    AffineVelocity,
    /// `f(t,x,v) = a_k + B_k v + D_k x`.
    AffinePhase,
}

impl Parameterization {
    pub fn params_per_cell(self, dim: usize) -> usize {
        match self {
            Parameterization::Zero => 0,
            Parameterization::Constant => dim,
            Parameterization::AffineVelocity => dim + dim * dim,
            Parameterization::AffinePhase => dim + 2 * dim * dim,
        }
    }

    fn has_velocity_gain(self) -> bool {
        matches!(self, Parameterization::AffineVelocity | Parameterization::AffinePhase)
    }

    fn has_position_gain(self) -> bool {
        matches!(self, Parameterization::AffinePhase)
    }
}

/// Parameters of one time cell. Matrices are row-major `d x d`; an empty
/// matrix stands for zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCell {
    pub a: Vec<f64>,
    #[serde(rename = "B", default, with = "square_rows", skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<f64>,
    #[serde(rename = "D", default, with = "square_rows", skip_serializing_if = "Vec::is_empty")]
    pub d: Vec<f64>,
}

impl ControlCell {
    pub fn zero(dim: usize, par: Parameterization) -> Self {
        Self {
            a: vec![0.0; dim],
            b: if par.has_velocity_gain() {
                vec![0.0; dim * dim]
            } else {
                Vec::new()
            },
            d: if par.has_position_gain() {
                vec![0.0; dim * dim]
            } else {
                Vec::new()
            },
        }
    }

    pub fn velocity_gain(&self) -> f64 {
        let dim = self.a.len();
        op_norm(dim, dim, &self.b)
    }

    pub fn position_gain(&self) -> f64 {
        let dim = self.a.len();
        op_norm(dim, dim, &self.d)
    }

    /// Global Lipschitz constant of `(x, v) -> a + B v + D x`.
    pub fn lipschitz(&self) -> f64 {
        self.velocity_gain() + self.position_gain()
    }

    /// `|a| + |B| + |D|`, the quantity bounded by `l`.
    pub fn mass(&self) -> f64 {
        norm(&self.a) + self.lipschitz()
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().chain(&self.b).chain(&self.d).all(|c| *c == 0.0)
    }

    fn scale(&mut self, factor: f64) {
        self.a
            .iter_mut()
            .chain(self.b.iter_mut())
            .chain(self.d.iter_mut())
            .for_each(|c| *c *= factor);
    }

    /// Writes `a + B v + D x` for the phase point `z = (x, v)`.
    #[inline]
    pub fn eval_into(&self, z: &[f64], out: &mut [f64]) {
        let dim = self.a.len();
        out[..dim].copy_from_slice(&self.a);
        if !self.b.is_empty() {
            mat_vec_add(&self.b, &z[dim..2 * dim], &mut out[..dim]);
        }
        if !self.d.is_empty() {
            mat_vec_add(&self.d, &z[..dim], &mut out[..dim]);
        }
    }
}

mod square_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(flat: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let n = (flat.len() as f64).sqrt().round() as usize;
        let rows: Vec<&[f64]> = if n == 0 { Vec::new() } else { flat.chunks(n).collect() };
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(serde::de::Error::custom("matrix must be square"));
        }
        Ok(rows.into_iter().flatten().collect())
    }
}

/// A feedback field `f(t, x, v)`, piecewise constant in time over `grid`
/// and affine in the state within each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawControl")]
pub struct ControlField {
    pub grid: Vec<f64>,
    pub parameterization: Parameterization,
    pub cells: Vec<ControlCell>,
}

#[derive(Deserialize)]
struct RawControl {
    grid: Vec<f64>,
    parameterization: Parameterization,
    cells: Vec<ControlCell>,
}

impl TryFrom<RawControl> for ControlField {
    type Error = Error;

    fn try_from(raw: RawControl) -> Result<Self> {
        let dim = raw.cells.first().map(|c| c.a.len()).unwrap_or(0);
        Self::new(dim, raw.grid, raw.parameterization, raw.cells)
    }
}

/// `cells + 1` equispaced nodes on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|k| {
            if k == cells {
                horizon
            } else {
                horizon * k as f64 / cells as f64
            }
        })
        .collect()
}

impl ControlField {
    pub fn new(
        dim: usize,
        grid: Vec<f64>,
        parameterization: Parameterization,
        cells: Vec<ControlCell>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("control dimension must be positive".into()));
        }
        if grid.len() < 2 || grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid(
                "control grid must start at 0 and be strictly increasing".into(),
            ));
        }
        if cells.len() + 1 != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} cells for {} grid nodes",
                cells.len(),
                grid.len()
            )));
        }
        let template = ControlCell::zero(dim, parameterization);
        for (k, c) in cells.iter().enumerate() {
            let shape_ok = c.a.len() == dim
                && (c.b.len() == template.b.len() || c.b.is_empty())
                && (c.d.len() == template.d.len() || c.d.is_empty());
            if !shape_ok {
                return Err(Error::Invalid(format!(
                    "cell {k} does not match the {parameterization:?} parameterization in dimension {dim}"
                )));
            }
            if parameterization == Parameterization::Zero && !c.is_zero() {
                return Err(Error::Invalid(format!("cell {k} of a zero control is nonzero")));
            }
            if c.a.iter().chain(&c.b).chain(&c.d).any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("cell {k} has non-finite parameters")));
            }
        }
        // normalize empty matrices to explicit zeros
        let cells = cells
            .into_iter()
            .map(|mut c| {
                if c.b.is_empty() {
                    c.b = template.b.clone();
                }
                if c.d.is_empty() {
                    c.d = template.d.clone();
                }
                c
            })
            .collect();
        Ok(Self {
            grid,
            parameterization,
            cells,
        })
    }

    pub fn zero(dim: usize, parameterization: Parameterization, grid: Vec<f64>) -> Self {
        let cells = vec![ControlCell::zero(dim, parameterization); grid.len() - 1];
        Self::new(dim, grid, parameterization, cells).expect("zero control is well formed")
    }

    /// Constant-in-space control with one value per cell.
    pub fn piecewise_constant(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let dim = values.first().map(Vec::len).unwrap_or(0);
        let cells = values
            .into_iter()
            .map(|a| ControlCell {
                a,
                ..Default::default()
            })
            .collect();
        Self::new(dim, grid, Parameterization::Constant, cells)
    }

    /// `f(t, x, v) = -gain * v` on every cell.
    pub fn velocity_feedback(dim: usize, grid: Vec<f64>, gain: f64) -> Self {
        let mut cell = ControlCell::zero(dim, Parameterization::AffineVelocity);
        for c in 0..dim {
            cell.b[c * dim + c] = -gain;
        }
        let cells = vec![cell; grid.len() - 1];
        Self::new(dim, grid, Parameterization::AffineVelocity, cells).expect("well formed")
    }

    pub fn dim(&self) -> usize {
        self.cells[0].a.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Cell containing `t` (right-continuous, the last cell owns `T`).
    pub fn cell_index(&self, t: f64) -> usize {
        let k = self.grid.partition_point(|&g| g <= t);
        k.saturating_sub(1).min(self.cells.len() - 1)
    }

    pub fn eval(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.cells[self.cell_index(t)].eval_into(z, &mut out);
        out
    }

    pub fn params_per_cell(&self) -> usize {
        self.parameterization.params_per_cell(self.dim())
    }

    /// Flattened parameter vector, cell by cell as `(a, B, D)`.
    pub fn to_params(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut p = Vec::with_capacity(self.cells.len() * self.params_per_cell());
        for c in &self.cells {
            match self.parameterization {
                Parameterization::Zero => {}
                Parameterization::Constant => p.extend_from_slice(&c.a),
                Parameterization::AffineVelocity => {
                    p.extend_from_slice(&c.a);
                    p.extend_from_slice(&c.b[..dim * dim]);
                }
                Parameterization::AffinePhase => {
                    p.extend_from_slice(&c.a);
                    p.extend_from_slice(&c.b);
                    p.extend_from_slice(&c.d);
                }
            }
        }
        p
    }

    /// Same grid and parameterization with new parameters.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let per = self.params_per_cell();
        if params.len() != per * self.cells.len() {
            return Err(Error::DimensionMismatch {
                expected: per * self.cells.len(),
                found: params.len(),
            });
        }
        let dim = self.dim();
        let mut out = self.clone();
        if per == 0 {
            return Ok(out);
        }
        for (cell, chunk) in out.cells.iter_mut().zip(params.chunks_exact(per)) {
            cell.a.copy_from_slice(&chunk[..dim]);
            if self.parameterization.has_velocity_gain() {
                cell.b.copy_from_slice(&chunk[dim..dim + dim * dim]);
            }
            if self.parameterization.has_position_gain() {
                cell.d.copy_from_slice(&chunk[dim + dim * dim..]);
            }
        }
        Ok(out)
    }

    /// Bound `l` relevant to cell `k`: its infimum over the cell.
    pub fn cell_bound(&self, k: usize, ell: &BoundFunction) -> f64 {
        ell.infimum_on(self.grid[k], self.grid[k + 1], self.horizon())
    }

    /// Indices of cells whose mass exceeds the bound.
    pub fn admissibility_violations(&self, ell: &BoundFunction) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(k, c)| c.mass() > self.cell_bound(*k, ell) * (1.0 + ADMISSIBILITY_TOLERANCE))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn is_admissible(&self, ell: &BoundFunction) -> bool {
        self.admissibility_violations(ell).is_empty()
    }

    /// Radially rescales every violating cell onto the admissible set.
    ///
    /// Idempotent; prunes nothing that is already admissible.
    pub fn project_admissible(&self, ell: &BoundFunction) -> Self {
        let mut out = self.clone();
        for k in 0..out.cells.len() {
            let bound = out.cell_bound(k, ell).max(0.0);
            let mass = out.cells[k].mass();
            if mass > bound * (1.0 + ADMISSIBILITY_TOLERANCE) {
                out.cells[k].scale(bound / mass);
            }
        }
        out
    }

    /// Fraction of cells whose parameters are all exactly zero.
    pub fn zero_cell_fraction(&self) -> f64 {
        self.cells.iter().filter(|c| c.is_zero()).count() as f64 / self.cells.len() as f64
    }

    pub fn same_grid(&self, other: &ControlField) -> bool {
        self.grid.len() == other.grid.len() && self.grid.iter().zip(&other.grid).all(|(a, b)| (a - b).abs() <= 1e-12)
    }
}
