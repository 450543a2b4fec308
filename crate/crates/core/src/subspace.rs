//! Orthonormal bases, coefficient combination and null-space completion.
//!
//! A layer's weight matrix is built from one "main" direction `a1` plus a
//! subset of an orthonormal basis of its null space. The null space of a
//! single nonzero vector is completed with one Householder reflection: for
//! `v = a1 / |a1|`, the reflector `H = I - 2 w w^T / (w^T w)` with
//! `w = v + sign(v_1) e_1` maps `e_1` onto `-sign(v_1) v`, so `H` is the
//! right-singular-vector matrix of `a1` seen as a `1 x n` matrix and its
//! remaining `n - 1` rows are an orthonormal basis of `{x : a1 . x = 0}`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Norm below which a main direction is treated as the zero vector.
pub const ZERO_VECTOR_TOL: f64 = 1e-10;

/// A `k x n` matrix whose rows are basis vectors of a subspace of `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    data: Array2<f64>,
}

impl BasisSet {
    /// Wraps a matrix whose rows are basis vectors. Requires `k <= n`.
    pub fn from_rows(data: Array2<f64>) -> Result<Self> {
        let (k, n) = data.dim();
        if k > n {
            return Err(Error::InvalidDimension {
                got: k,
                reason: "a basis of R^n has at most n rows",
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateInput("basis has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn as_matrix(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.data
    }
}

/// Draws an `n x n` orthonormal basis by orthonormalizing i.i.d. standard
/// normal rows (modified Gram-Schmidt, two passes).
pub fn generate_orthogonal_basis<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<BasisSet> {
    if n < 2 {
        return Err(Error::InvalidDimension {
            got: n,
            reason: "orthogonal basis needs n >= 2",
        });
    }
    loop {
        let raw = Array2::from_shape_simple_fn((n, n), || rng.sample::<f64, _>(StandardNormal));
        if let Some(q) = orthonormalize_rows(raw) {
            return BasisSet::from_rows(q);
        }
        // A rank-deficient Gaussian draw has probability zero; redraw if it happens.
    }
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Returns `None`
/// when a row collapses (numerically dependent input).
fn orthonormalize_rows(mut m: Array2<f64>) -> Option<Array2<f64>> {
    let k = m.nrows();
    for i in 0..k {
        for _pass in 0..2 {
            for j in 0..i {
                let (done, mut rest) = m.view_mut().split_at(Axis(0), i);
                let qj = done.row(j);
                let mut ri = rest.row_mut(0);
                let proj = qj.dot(&ri);
                ri.scaled_add(-proj, &qj);
            }
        }
        let mut ri = m.row_mut(i);
        let norm = ri.dot(&ri).sqrt();
        if norm < 1e-12 {
            return None;
        }
        ri /= norm;
    }
    Some(m)
}

/// Linear combination of the basis rows: `sum_i coeffs[i] * S.row(i)`.
pub fn combine(basis: &BasisSet, coeffs: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if coeffs.len() != basis.rows() {
        return Err(Error::mismatch("combine coefficients", basis.rows(), coeffs.len()));
    }
    Ok(coeffs.dot(basis.as_matrix()))
}

/// Householder description of the orthogonal complement of one vector.
///
/// Row `j` (1-based over `1..n`, i.e. excluding the first row of `H`) is
/// materialized on demand so a decoder only pays for the rows it keeps.
#[derive(Debug, Clone)]
pub struct NullSpace {
    w: Array1<f64>,
    scale: f64,
}

impl NullSpace {
    pub fn of(a1: ArrayView1<'_, f64>) -> Result<Self> {
        let n = a1.len();
        if n < 2 {
            return Err(Error::InvalidDimension {
                got: n,
                reason: "null space needs n >= 2",
            });
        }
        let norm = a1.dot(&a1).sqrt();
        if !norm.is_finite() || norm <= ZERO_VECTOR_TOL {
            return Err(Error::DegenerateInput(format!(
                "main direction has norm {norm:e}, below {ZERO_VECTOR_TOL:e}"
            )));
        }
        let mut w = a1.mapv(|x| x / norm);
        let sign = if w[0] >= 0.0 { 1.0 } else { -1.0 };
        w[0] += sign;
        let wtw = w.dot(&w);
        Ok(Self {
            w,
            scale: 2.0 / wtw,
        })
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Null-space basis vector `j`, for `j` in `0..n-1` (row `j + 1` of `H`).
    pub fn vector(&self, j: usize) -> Array1<f64> {
        let idx = j + 1;
        let c = self.scale * self.w[idx];
        let mut row = self.w.mapv(|x| -c * x);
        row[idx] += 1.0;
        row
    }
}

/// Orthonormal basis `a_2, ..., a_n` of the null space of `a1`, one per row.
pub fn null_space_basis(a1: ArrayView1<'_, f64>) -> Result<BasisSet> {
    let ns = NullSpace::of(a1)?;
    let n = ns.dim();
    let mut out = Array2::zeros((n - 1, n));
    for j in 0..n - 1 {
        out.row_mut(j).assign(&ns.vector(j));
    }
    BasisSet::from_rows(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::{arr1, Array};

    fn max_offdiag_gram(m: &Array2<f64>) -> (f64, f64) {
        let g = m.dot(&m.t());
        let mut diag: f64 = 0.0;
        let mut off: f64 = 0.0;
        for ((i, j), v) in g.indexed_iter() {
            if i == j {
                diag = diag.max((v - 1.0).abs());
            } else {
                off = off.max(v.abs());
            }
        }
        (diag, off)
    }

    #[test]
    fn two_dim_basis_is_orthonormal() {
        let s = generate_orthogonal_basis(2, &mut rng::stream(3, &[])).unwrap();
        let (d, o) = max_offdiag_gram(s.as_matrix());
        assert!(d < 1e-8 && o < 1e-8);
    }

    #[test]
    fn basis_is_deterministic() {
        let a = generate_orthogonal_basis(5, &mut rng::stream(11, &[1])).unwrap();
        let b = generate_orthogonal_basis(5, &mut rng::stream(11, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn basis_rejects_small_n() {
        assert!(matches!(
            generate_orthogonal_basis(1, &mut rng::stream(0, &[])),
            Err(Error::InvalidDimension { .. })
        ));
    }

    #[test]
    fn combine_identity_and_zero() {
        let id = BasisSet::from_rows(Array::eye(5)).unwrap();
        let b = arr1(&[0.7, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(combine(&id, b.view()).unwrap(), b);

        let s = generate_orthogonal_basis(5, &mut rng::stream(1, &[])).unwrap();
        let z = combine(&s, Array1::zeros(5).view()).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));

        assert!(combine(&s, Array1::zeros(4).view()).is_err());
    }

    #[test]
    fn null_space_of_axis() {
        let ns = null_space_basis(arr1(&[1.0, 0.0, 0.0]).view()).unwrap();
        assert_eq!(ns.rows(), 2);
        for r in 0..2 {
            assert!(ns.row(r)[0].abs() < 1e-12);
        }
        let (d, o) = max_offdiag_gram(ns.as_matrix());
        assert!(d < 1e-12 && o < 1e-12);
    }

    #[test]
    fn null_space_rejects_zero_vector() {
        assert!(matches!(
            null_space_basis(arr1(&[0.0, 1e-12, 0.0]).view()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn from_rows_rejects_tall() {
        assert!(BasisSet::from_rows(Array2::zeros((3, 2))).is_err());
    }
}
