//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Relative factor in the default rank cutoff `max(rows, cols) * sigma_1 * factor`.
pub const DEFAULT_RANK_FACTOR: f64 = 1.1e-15;

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Singular values in descending order.
pub fn singular_values_real(m: &RMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn singular_values_complex(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank from descending singular values.
///
/// A value counts when `sigma_k > max(rows, cols) * sigma_1 * factor`; a zero
/// matrix has rank 0.
pub fn rank_from_singular_values(sv: &[f64], rows: usize, cols: usize, factor: f64) -> usize {
    let Some(&top) = sv.first() else { return 0 };
    let cutoff = rows.max(cols) as f64 * top * factor;
    sv.iter().filter(|&&s| s > cutoff).count()
}

pub fn rank_real(m: &RMat, factor: f64) -> usize {
    let sv = singular_values_real(m);
    rank_from_singular_values(&sv, m.nrows(), m.ncols(), factor)
}

/// Determinant by LU with partial pivoting.
pub fn det_complex(m: &CMat) -> Complex64 {
    if m.nrows() == 0 {
        return Complex64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

/// Right singular vectors of a square complex matrix, ordered by ascending
/// singular value. Each entry is `(sigma, unit vector)`.
pub fn right_singular_pairs_ascending(m: &CMat) -> Vec<(f64, Vec<Complex64>)> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..svd.singular_values.len())
        .map(|i| {
            let row: Vec<Complex64> = (0..n).map(|j| v_t[(i, j)].conj()).collect();
            (svd.singular_values[i], row)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Operator 2-norm of a complex matrix (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    singular_values_complex(m).first().copied().unwrap_or(0.0)
}

/// Complex number in the `{ "re": .., "im": .. }` wire shape used by every
/// report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl std::fmt::Display for ComplexValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.12}{:+.12}i", self.re, self.im)
    }
}

impl From<Complex64> for ComplexValue {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<ComplexValue> for Complex64 {
    fn from(z: ComplexValue) -> Self {
        Complex64::new(z.re, z.im)
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Option<RMat> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(RMat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
