//! Dense complex factorizations. Storage is nalgebra; the SVD and the
//! Hermitian eigensolver come from faer.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

/// Thin SVD `m = u diag(s) v^dag` with `s` sorted in descending order.
pub(crate) struct Svd {
    pub u: DMatrix<C64>,
    pub s: Vec<f64>,
    pub v: DMatrix<C64>,
}

pub(crate) fn svd(m: &DMatrix<C64>) -> Result<Svd> {
    let (rows, cols) = m.shape();
    let r = rows.min(cols);
    if r == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            v: DMatrix::zeros(cols, 0),
        });
    }
    let f = to_faer(m)
        .thin_svd()
        .map_err(|_| Error::NumericalFailure("SVD did not converge".into()))?;
    let (u, v, s) = (f.U(), f.V(), f.S().column_vector());
    Ok(Svd {
        u: DMatrix::from_fn(rows, r, |i, k| u[(i, k)]),
        s: (0..r).map(|k| s[k].re).collect(),
        v: DMatrix::from_fn(cols, r, |i, k| v[(i, k)]),
    })
}

fn to_faer(m: &DMatrix<C64>) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Largest singular value; zero for empty matrices.
pub fn op_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match to_faer(m).singular_values() {
        Ok(s) => s.first().copied().unwrap_or(0.0),
        Err(_) => f64::NAN,
    }
}

/// Orthonormal basis of the complement of the column span of an
/// orthonormal `n x r` basis, as an `n x (n - r)` matrix.
pub(crate) fn complement(basis: &DMatrix<C64>) -> DMatrix<C64> {
    let (n, r) = basis.shape();
    if r >= n {
        return DMatrix::zeros(n, 0);
    }
    let mut padded = DMatrix::zeros(n, r + n);
    padded.view_mut((0, 0), (n, r)).copy_from(basis);
    padded.view_mut((0, r), (n, n)).fill_with_identity();
    let q = padded.qr().q();
    q.columns(r, n - r).into_owned()
}

/// Eigenpairs of a Hermitian matrix, eigenvalues descending.
pub(crate) fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    // the Hermitian part guards against rounding asymmetry
    let h = to_faer(&((m + m.adjoint()) * C64::new(0.5, 0.0)));
    let eig = h
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("Hermitian eigensolver failed to converge");
    let (s, u) = (eig.S().column_vector(), eig.U());
    // faer returns ascending order
    let vals = (0..n).map(|k| s[n - 1 - k].re).collect();
    let vecs = DMatrix::from_fn(n, n, |i, k| u[(i, n - 1 - k)]);
    (vals, vecs)
}

/// Phase that makes the largest-magnitude entry of `v` real and positive.
/// Ties go to the lowest index.
pub(crate) fn canonical_phase<'a>(v: impl IntoIterator<Item = &'a C64>) -> C64 {
    let mut best = C64::new(0.0, 0.0);
    let mut best_norm = 0.0;
    for x in v {
        let n = x.norm();
        if n > best_norm * (1.0 + 1e-12) {
            best = *x;
            best_norm = n;
        }
    }
    if best_norm == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        best.conj() / best_norm
    }
}

pub(crate) fn conj_vec(v: &DVector<C64>) -> DVector<C64> {
    v.map(|x| x.conj())
}

/// `max |G - 1|` entry-wise for the Gram matrix of the columns of `m`.
pub(crate) fn gram_deviation(m: &DMatrix<C64>) -> f64 {
    let g = m.adjoint() * m;
    let mut worst: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}
