//! Small dense helpers on `&[f64]` vectors and row-major square matrices.

use nalgebra::DMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Spectral norm of a row-major `rows x cols` matrix.
pub fn op_norm(rows: usize, cols: usize, m: &[f64]) -> f64 {
    if m.is_empty() || m.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    if rows == 1 || cols == 1 {
        return norm(m);
    }
    DMatrix::from_row_slice(rows, cols, m)
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// `out += m * x` for a row-major `out.len() x x.len()` matrix.
#[inline]
pub fn mat_vec_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (row, o) in m.chunks_exact(cols).zip(out.iter_mut()) {
        *o += dot(row, x);
    }
}
