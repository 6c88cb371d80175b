//! Vertex-graded finite-dimensional correspondences over `C^q`.
//!
//! Every space in the crate (fibers, tensor powers, representation spaces)
//! is a complex Hilbert space whose basis vectors carry a (left, right)
//! vertex pair. The `C^q`-valued rigging of two basis vectors is the scalar
//! inner product placed at the shared right vertex, so module norms reduce
//! to ordinary matrix norms. Balanced tensor products over `C^q` keep only
//! composable pairs (right vertex of the first factor = left vertex of the
//! second), which for `q = 1` is the plain Kronecker product.

use crate::linalg::{C64, CMatrix};

/// A labeled basis vector with its bimodule grading.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisVector {
    pub label: String,
    pub left: usize,
    pub right: usize,
}

/// A finite-dimensional correspondence over `C^q`, stored as a graded basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradedCorrespondence {
    pub q: usize,
    pub basis: Vec<BasisVector>,
}

impl GradedCorrespondence {
    pub fn new(q: usize, basis: Vec<BasisVector>) -> Self {
        for b in &basis {
            assert!(b.left < q && b.right < q, "vertex out of range");
        }
        GradedCorrespondence { q, basis }
    }

    /// The coefficient algebra `C^q` itself, graded diagonally.
    pub fn units(q: usize, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), q);
        let basis = labels
            .into_iter()
            .enumerate()
            .map(|(a, label)| BasisVector { label, left: a, right: a })
            .collect();
        GradedCorrespondence { q, basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.basis.iter().position(|b| b.label == label)
    }

    /// Indices of the block mapping vertex `b` to vertex `a`.
    pub fn block(&self, a: usize, b: usize) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.basis[i].left == a && self.basis[i].right == b)
            .collect()
    }

    /// Matrix of the left action of `sum_a coeff[a] e_a` (projection-weighted
    /// by left vertex).
    pub fn left_action(&self, coeff: &[C64]) -> CMatrix {
        assert_eq!(coeff.len(), self.q);
        CMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            if i == j { coeff[self.basis[i].left] } else { C64::new(0.0, 0.0) }
        })
    }

    /// Matrix of the right action of `sum_b coeff[b] e_b`.
    pub fn right_action(&self, coeff: &[C64]) -> CMatrix {
        assert_eq!(coeff.len(), self.q);
        CMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            if i == j { coeff[self.basis[i].right] } else { C64::new(0.0, 0.0) }
        })
    }

    /// The `C^q`-valued rigging `<x, y>` of two coefficient vectors:
    /// coordinate `b` collects the contributions of basis vectors riding
    /// on right vertex `b`.
    pub fn rigging(&self, x: &[C64], y: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        let mut out = vec![C64::new(0.0, 0.0); self.q];
        for i in 0..self.dim() {
            out[self.basis[i].right] += x[i].conj() * y[i];
        }
        out
    }
}

/// Balanced tensor product of two graded correspondences: the composable
/// pairs in (left index, right index) lexicographic order.
#[derive(Clone, Debug)]
pub struct TensorSpace {
    pub space: GradedCorrespondence,
    /// For each composite basis index, the (first factor, second factor) pair.
    pub pairs: Vec<(usize, usize)>,
}

pub fn tensor(g1: &GradedCorrespondence, g2: &GradedCorrespondence) -> TensorSpace {
    assert_eq!(g1.q, g2.q);
    let mut basis = Vec::new();
    let mut pairs = Vec::new();
    for (i, u) in g1.basis.iter().enumerate() {
        for (j, v) in g2.basis.iter().enumerate() {
            if u.right == v.left {
                basis.push(BasisVector {
                    label: compose_labels(&u.label, &v.label),
                    left: u.left,
                    right: v.right,
                });
                pairs.push((i, j));
            }
        }
    }
    TensorSpace { space: GradedCorrespondence { q: g1.q, basis }, pairs }
}

fn compose_labels(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_string(),
        (_, true) => a.to_string(),
        _ => format!("{a}{b}"),
    }
}

/// Balanced Kronecker product of operators `A` on `g1` and `B` on `g2`,
/// expressed on the composable-pair bases of domain and codomain.
///
/// When `A` and `B` are bimodule maps (block-preserving) this is the tensor
/// product operator on the balanced tensor product; couplings to
/// non-composable pairs vanish identically.
pub fn graded_kron(dom: &TensorSpace, cod: &TensorSpace, a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(cod.pairs.len(), dom.pairs.len());
    for (col, &(u, v)) in dom.pairs.iter().enumerate() {
        for (row, &(up, vp)) in cod.pairs.iter().enumerate() {
            let x = a[(up, u)] * b[(vp, v)];
            if x != C64::new(0.0, 0.0) {
                out[(row, col)] = x;
            }
        }
    }
    out
}

/// Tensor a coefficient vector in `g1` against an operator `B : dom2 -> cod2`
/// with values in `g2`-spaces: the map `eta -> zeta ⊗ B(eta)` from `dom2`
/// into the balanced tensor `cod`.
pub fn vector_kron_left(
    cod: &TensorSpace,
    zeta: &[C64],
    b: &CMatrix,
) -> CMatrix {
    let mut out = CMatrix::zeros(cod.pairs.len(), b.ncols());
    for (row, &(u, v)) in cod.pairs.iter().enumerate() {
        let z = zeta[u];
        if z != C64::new(0.0, 0.0) {
            for col in 0..b.ncols() {
                out[(row, col)] = z * b[(v, col)];
            }
        }
    }
    out
}

/// The map `eta -> (<zeta| ⊗ I) eta` from the balanced tensor `dom` to the
/// second factor, conjugate-linear in `zeta`.
pub fn vector_pairing_left(dom: &TensorSpace, zeta: &[C64], dim2: usize) -> CMatrix {
    let mut out = CMatrix::zeros(dim2, dom.pairs.len());
    for (col, &(u, v)) in dom.pairs.iter().enumerate() {
        out[(v, col)] += zeta[u].conj();
    }
    out
}
