//! Dense complex matrix kernel.
//!
//! Thin layer over `nalgebra` fixing the conventions the rest of the crate
//! relies on: Kronecker ordering (left factor indexes the outer blocks),
//! SVD-based operator norms and range orthonormalization with an explicit
//! rank threshold.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Default relative rank threshold: singular values below `tol * sigma_max`
/// are treated as zero.
pub const RANK_TOL: f64 = 1e-8;

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn scalar(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Kronecker product with the left factor varying slowest:
/// `(A ⊗ B)(x ⊗ y) = Ax ⊗ By` where `x ⊗ y` has index `i * ncols(B) + j`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Largest singular value.
pub fn op_norm(a: &CMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().max()
}

/// True when every entry is finite (no NaN or infinity).
pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Isometry whose columns form an orthonormal basis of `range(A)`.
///
/// Columns are the left singular vectors with singular value above
/// `tol * sigma_max`; the zero matrix yields a matrix with zero columns.
pub fn orthonormal_range(a: &CMatrix, tol: f64) -> CMatrix {
    assert!(tol > 0.0, "rank threshold must be positive");
    if a.nrows() == 0 || a.ncols() == 0 {
        return CMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd with u requested");
    let s = svd.singular_values;
    let smax = s.max();
    if smax == 0.0 {
        return CMatrix::zeros(a.nrows(), 0);
    }
    let cols: Vec<usize> = (0..s.len()).filter(|&i| s[i] > tol * smax).collect();
    let mut j = CMatrix::zeros(a.nrows(), cols.len());
    for (out, &i) in cols.iter().enumerate() {
        j.set_column(out, &u.column(i));
    }
    j
}

/// Like [`orthonormal_range`] but with an absolute singular-value cutoff,
/// for subspace arithmetic where near-zero matrices must yield no columns.
pub fn orthonormal_range_abs(a: &CMatrix, abs_tol: f64) -> CMatrix {
    if a.nrows() == 0 || a.ncols() == 0 {
        return CMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd with u requested");
    let s = svd.singular_values;
    let cols: Vec<usize> = (0..s.len()).filter(|&i| s[i] > abs_tol).collect();
    let mut j = CMatrix::zeros(a.nrows(), cols.len());
    for (out, &i) in cols.iter().enumerate() {
        j.set_column(out, &u.column(i));
    }
    j
}

/// Largest principal-angle sine between the column spans of two isometries:
/// `max(||(I - P_a) B||, ||(I - P_b) A||)`.
pub fn subspace_angle_sin(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.nrows(), b.nrows(), "ambient dimensions differ");
    let pa = a * a.adjoint();
    let pb = b * b.adjoint();
    let n = a.nrows();
    let id = identity(n);
    let s1 = op_norm(&((&id - &pa) * b));
    let s2 = op_norm(&((&id - &pb) * a));
    s1.max(s2)
}
