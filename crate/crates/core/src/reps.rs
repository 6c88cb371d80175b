//! Covariant representations on finite-dimensional graded Hilbert spaces.
//!
//! A representation stores, for each level `n`, the operators `T_n(e_κ)`
//! on `H = ⊕_a H_a` in one fixed basis ordered by vertex block. Generators
//! determine everything: `T_n` extends `T_1` through products over the word
//! expansion of `J_n`, and the extension is accepted only when the
//! multiplicativity residual over full basis sweeps stays below tolerance.

use std::sync::Arc;

use thiserror::Error;

use crate::fock::{compress_pair, Fock};
use crate::linalg::{
    identity, op_norm, orthonormal_range, orthonormal_range_abs, subspace_angle_sin, C64, CMatrix,
    RANK_TOL,
};
use crate::systems::SubproductSystem;

/// Absolute singular-value cutoff for the Wold subspace arithmetic: well
/// above double-precision noise, well below any genuine direction at desk
/// scale.
const SUBSPACE_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RepError {
    #[error("generator {index} violates the bimodule grading (residual {residual:.3e})")]
    Grading { index: usize, residual: f64 },
    #[error("inconsistent extension at (n,m)=({n},{m}), basis pair ({zeta},{eta}): residual {residual:.3e}")]
    Inconsistent { n: usize, m: usize, zeta: usize, eta: usize, residual: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Wold hypothesis fails at n={n}: ||T~_n T~_n* - pi(R_n')|| = {residual:.3e}")]
    HypothesisFailed { n: usize, residual: f64 },
}

/// A validated covariant representation.
#[derive(Clone, Debug)]
pub struct CovariantRep {
    pub system: Arc<SubproductSystem>,
    /// Dimension of `H_a` per vertex.
    pub dims: Vec<usize>,
    /// Vertex of each basis index of `H`.
    pub grades: Vec<usize>,
    /// `t[n][κ]`: the operator of the `κ`-th basis vector of `X(n)`;
    /// `t[0][a] = σ(e_a)`.
    pub t: Vec<Vec<CMatrix>>,
    /// Worst multiplicativity residual observed during validation.
    pub max_mult_residual: f64,
}

fn vertex_projection(grades: &[usize], a: usize) -> CMatrix {
    CMatrix::from_fn(grades.len(), grades.len(), |i, j| {
        if i == j && grades[i] == a { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    })
}

/// Extend generator data `T_1` to a full representation and validate the
/// multiplicativity relations.
pub fn rep_from_generators(
    system: Arc<SubproductSystem>,
    dims: Vec<usize>,
    t1: &[CMatrix],
    tol: f64,
) -> Result<CovariantRep, RepError> {
    if dims.len() != system.q {
        return Err(RepError::Dimension(format!(
            "expected {} vertex dimensions, got {}",
            system.q,
            dims.len()
        )));
    }
    if t1.len() != system.fiber_dim(1) {
        return Err(RepError::Dimension(format!(
            "expected {} generators, got {}",
            system.fiber_dim(1),
            t1.len()
        )));
    }
    let h_dim: usize = dims.iter().sum();
    let mut grades = Vec::with_capacity(h_dim);
    for (a, &d) in dims.iter().enumerate() {
        grades.extend(std::iter::repeat(a).take(d));
    }

    for (idx, m) in t1.iter().enumerate() {
        if m.nrows() != h_dim || m.ncols() != h_dim {
            return Err(RepError::Dimension(format!(
                "generator {idx} is {}x{}, H has dimension {h_dim}",
                m.nrows(),
                m.ncols()
            )));
        }
        let bv = &system.fibers[1].basis[idx];
        let graded =
            vertex_projection(&grades, bv.left) * m * vertex_projection(&grades, bv.right);
        let residual = op_norm(&(m - graded));
        if residual > tol {
            return Err(RepError::Grading { index: idx, residual });
        }
    }

    // sigma(e_a) = projection onto H_a.
    let sigma: Vec<CMatrix> = (0..system.q).map(|a| vertex_projection(&grades, a)).collect();

    // Word products T̂_w, level by level; T_n(e_κ) = Σ_w (J_n e_κ)_w T̂_w.
    let mut t = vec![sigma, t1.to_vec()];
    let mut word_ops: Vec<CMatrix> = (0..system.tensors[1].dim())
        .map(|w| t1[w].clone())
        .collect();
    for n in 2..=system.n_max {
        let level = &system.tensors[n];
        let mut next_words = Vec::with_capacity(level.dim());
        for idx in 0..level.dim() {
            let (first, rest_idx) = system.split_index(1, n - 1, idx);
            next_words.push(&t1[first] * &word_ops[rest_idx]);
        }
        let jn = &system.j[n];
        let mut tn = Vec::with_capacity(system.fiber_dim(n));
        for kappa in 0..system.fiber_dim(n) {
            let mut acc = CMatrix::zeros(h_dim, h_dim);
            for w in 0..level.dim() {
                let c = jn[(w, kappa)];
                if c != C64::new(0.0, 0.0) {
                    acc += &next_words[w] * c;
                }
            }
            tn.push(acc);
        }
        t.push(tn);
        word_ops = next_words;
    }

    let mut rep = CovariantRep { system, dims, grades, t, max_mult_residual: 0.0 };
    let worst = rep.validate_multiplicativity()?;
    if worst.0 > tol {
        let (residual, (n, m, zeta, eta)) = worst;
        return Err(RepError::Inconsistent { n, m, zeta, eta, residual });
    }
    rep.max_mult_residual = worst.0;
    Ok(rep)
}

impl CovariantRep {
    pub fn dim(&self) -> usize {
        self.grades.len()
    }

    /// Max over all `n + m <= N` basis sweeps of
    /// `||T_{n+m}(p_{n+m}(ζ⊗η)) - T_n(ζ) T_m(η)||`, with the witness.
    pub fn validate_multiplicativity(
        &self,
    ) -> Result<(f64, (usize, usize, usize, usize)), RepError> {
        let sys = &self.system;
        let mut worst = (0.0_f64, (0, 0, 0, 0));
        for n in 1..sys.n_max {
            for m in 1..=(sys.n_max - n) {
                for zi in 0..sys.fiber_dim(n) {
                    let mut zeta = vec![C64::new(0.0, 0.0); sys.fiber_dim(n)];
                    zeta[zi] = C64::new(1.0, 0.0);
                    for hi in 0..sys.fiber_dim(m) {
                        let mut eta = vec![C64::new(0.0, 0.0); sys.fiber_dim(m)];
                        eta[hi] = C64::new(1.0, 0.0);
                        let coeffs = compress_pair(sys, n, m, &zeta, &eta);
                        let mut lhs = CMatrix::zeros(self.dim(), self.dim());
                        for (kappa, c) in coeffs.iter().enumerate() {
                            if *c != C64::new(0.0, 0.0) {
                                lhs += &self.t[n + m][kappa] * *c;
                            }
                        }
                        let rhs = &self.t[n][zi] * &self.t[m][hi];
                        let r = op_norm(&(lhs - rhs));
                        if r > worst.0 {
                            worst = (r, (n, m, zi, hi));
                        }
                    }
                }
            }
        }
        Ok(worst)
    }

    /// `T̃_n` as a matrix from the graded tensor product `X(n) ⊗_σ H` to `H`.
    pub fn ttilde(&self, n: usize) -> CMatrix {
        let fiber = &self.system.fibers[n];
        let mut cols = Vec::new();
        for kappa in 0..fiber.dim() {
            let right = fiber.basis[kappa].right;
            for h in 0..self.dim() {
                if self.grades[h] == right {
                    cols.push((kappa, h));
                }
            }
        }
        let mut m = CMatrix::zeros(self.dim(), cols.len());
        for (col, &(kappa, h)) in cols.iter().enumerate() {
            m.set_column(col, &self.t[n][kappa].column(h));
        }
        m
    }

    /// The defect `T̃_n T̃_n*`.
    pub fn defect(&self, n: usize) -> CMatrix {
        let t = self.ttilde(n);
        &t * t.adjoint()
    }

    /// `π(R_n') = Σ_κ T_n(e_κ) T_n(e_κ)*` through the reconstruction
    /// witness; `π(R_0') = I`.
    pub fn rp_matrix(&self, n: usize) -> CMatrix {
        if n == 0 {
            return identity(self.dim());
        }
        let mut acc = CMatrix::zeros(self.dim(), self.dim());
        for kappa in 0..self.system.fiber_dim(n) {
            acc += &self.t[n][kappa] * self.t[n][kappa].adjoint();
        }
        acc
    }

    /// Restrict to an invariant subspace given by an isometry basis.
    pub fn compress(&self, basis: &CMatrix) -> Vec<Vec<CMatrix>> {
        self.t
            .iter()
            .map(|level| level.iter().map(|m| basis.adjoint() * m * basis).collect())
            .collect()
    }
}

/// The defining (Fock) representation on the truncated module.
pub fn fock_rep(fock: &Fock) -> CovariantRep {
    let sys = fock.system.clone();
    let mut dims = vec![0usize; sys.q];
    let mut grades = Vec::with_capacity(fock.total_dim());
    for n in 0..=sys.n_max {
        for bv in &sys.fibers[n].basis {
            grades.push(bv.left);
        }
    }
    // Reorder H so vertex blocks are contiguous.
    let mut order: Vec<usize> = (0..grades.len()).collect();
    order.sort_by_key(|&i| (grades[i], i));
    let perm: Vec<usize> = order.clone();
    let mut sorted_grades = Vec::with_capacity(grades.len());
    for &i in &perm {
        sorted_grades.push(grades[i]);
    }
    for &g in &sorted_grades {
        dims[g] += 1;
    }
    let total = grades.len();
    let mut pmat = CMatrix::zeros(total, total);
    for (new, &old) in perm.iter().enumerate() {
        pmat[(new, old)] = C64::new(1.0, 0.0);
    }

    let mut t = Vec::with_capacity(sys.n_max + 1);
    let mut sigma = Vec::with_capacity(sys.q);
    for a in 0..sys.q {
        let mut unit = vec![C64::new(0.0, 0.0); sys.q];
        unit[a] = C64::new(1.0, 0.0);
        sigma.push(&pmat * fock.phi(&unit).op.to_dense() * pmat.adjoint());
    }
    t.push(sigma);
    for n in 1..=sys.n_max {
        let mut level = Vec::with_capacity(sys.fiber_dim(n));
        for kappa in 0..sys.fiber_dim(n) {
            let s = fock.shift_basis(n, kappa).expect("level in range");
            level.push(&pmat * s.op.to_dense() * pmat.adjoint());
        }
        t.push(level);
    }
    CovariantRep { system: sys, dims, grades: sorted_grades, t, max_mult_residual: 0.0 }
}

/// Evaluation representation of a scalar-base system at `z ∈ C^d`.
pub fn evaluation_rep(
    system: Arc<SubproductSystem>,
    z: &[C64],
    tol: f64,
) -> Result<CovariantRep, RepError> {
    if system.q != 1 {
        return Err(RepError::Dimension("evaluation representations need q = 1".into()));
    }
    if z.len() != system.fiber_dim(1) {
        return Err(RepError::Dimension("one coordinate per letter".into()));
    }
    let t1: Vec<CMatrix> = z
        .iter()
        .map(|&zi| CMatrix::from_element(1, 1, zi))
        .collect();
    rep_from_generators(system, vec![1], &t1, tol)
}

/// Direct sum of two representations of the same system.
pub fn direct_sum(a: &CovariantRep, b: &CovariantRep) -> CovariantRep {
    direct_sum_parts(a, b).0
}

/// Direct sum together with the isometric embeddings of the two summands.
pub fn direct_sum_parts(a: &CovariantRep, b: &CovariantRep) -> (CovariantRep, CMatrix, CMatrix) {
    assert!(Arc::ptr_eq(&a.system, &b.system), "summands over different systems");
    let q = a.system.q;
    let dims: Vec<usize> = (0..q).map(|v| a.dims[v] + b.dims[v]).collect();
    let total = a.dim() + b.dim();

    // Positions of each summand's basis inside the vertex-blocked sum.
    let mut offsets = Vec::with_capacity(q + 1);
    let mut acc = 0;
    for v in 0..q {
        offsets.push(acc);
        acc += dims[v];
    }
    let mut grades = Vec::with_capacity(total);
    for (v, &d) in dims.iter().enumerate() {
        grades.extend(std::iter::repeat(v).take(d));
    }
    let mut map_a = Vec::with_capacity(a.dim());
    let mut fill = offsets.clone();
    for &g in &a.grades {
        map_a.push(fill[g]);
        fill[g] += 1;
    }
    let mut map_b = Vec::with_capacity(b.dim());
    for &g in &b.grades {
        map_b.push(fill[g]);
        fill[g] += 1;
    }

    let embed = |m_a: &CMatrix, m_b: &CMatrix| -> CMatrix {
        let mut out = CMatrix::zeros(total, total);
        for i in 0..m_a.nrows() {
            for j in 0..m_a.ncols() {
                out[(map_a[i], map_a[j])] = m_a[(i, j)];
            }
        }
        for i in 0..m_b.nrows() {
            for j in 0..m_b.ncols() {
                out[(map_b[i], map_b[j])] = m_b[(i, j)];
            }
        }
        out
    };

    let t = a
        .t
        .iter()
        .zip(&b.t)
        .map(|(la, lb)| la.iter().zip(lb).map(|(x, y)| embed(x, y)).collect())
        .collect();
    let rep = CovariantRep {
        system: a.system.clone(),
        dims,
        grades,
        t,
        max_mult_residual: a.max_mult_residual.max(b.max_mult_residual),
    };
    let mut emb_a = CMatrix::zeros(total, a.dim());
    for (i, &row) in map_a.iter().enumerate() {
        emb_a[(row, i)] = C64::new(1.0, 0.0);
    }
    let mut emb_b = CMatrix::zeros(total, b.dim());
    for (i, &row) in map_b.iter().enumerate() {
        emb_b[(row, i)] = C64::new(1.0, 0.0);
    }
    (rep, emb_a, emb_b)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct Classification {
    pub fully_coisometric: bool,
    pub essential: bool,
    pub pure: bool,
    pub coisometry_residual: f64,
    /// `||T̃_n T̃_n*||` for `n = 1..=horizon`.
    pub defect_norms: Vec<f64>,
    /// `(rank T̃_n, dim H)` for `n = 1..=horizon`.
    pub ranks: Vec<(usize, usize)>,
    /// `||T̃_n||`; representations arising from the Toeplitz algebra are
    /// contractions. Flagged as evidence, never enforced.
    pub ttilde_norms: Vec<f64>,
}

/// Classify a representation over a horizon `<= N`.
///
/// Purity at finite truncation: either the defect norms certify decay, or
/// the Wold closure of the level projections is everything (the truncated
/// Fock representation has constant defect norm 1 yet is induced, so norm
/// decay alone is not decidable here).
pub fn classify(rep: &CovariantRep, horizon: usize, tol: f64) -> Classification {
    let horizon = horizon.min(rep.system.n_max);
    let d1 = rep.defect(1);
    let coisometry_residual = op_norm(&(&d1 - &identity(rep.dim())));
    let fully_coisometric = coisometry_residual <= tol;

    let mut defect_norms = Vec::with_capacity(horizon);
    let mut ranks = Vec::with_capacity(horizon);
    let mut ttilde_norms = Vec::with_capacity(horizon);
    let mut essential = true;
    for n in 1..=horizon {
        let t = rep.ttilde(n);
        let rank = orthonormal_range(&t, RANK_TOL).ncols();
        ranks.push((rank, rep.dim()));
        if rank != rep.dim() {
            essential = false;
        }
        ttilde_norms.push(op_norm(&t));
        defect_norms.push(op_norm(&rep.defect(n)));
    }
    let decayed = defect_norms.last().map(|&v| v <= tol).unwrap_or(false);
    let pure = decayed || {
        let closure = induced_closure(rep, horizon);
        closure.ncols() == rep.dim()
    };
    Classification {
        fully_coisometric,
        essential,
        pure,
        coisometry_residual,
        defect_norms,
        ranks,
        ttilde_norms,
    }
}

/// Smallest subspace containing every `ran π(Q_n)`, `n < horizon`, closed
/// under the generators and their adjoints.
fn induced_closure(rep: &CovariantRep, horizon: usize) -> CMatrix {
    let dim = rep.dim();
    let mut seed_cols: Vec<CMatrix> = Vec::new();
    for n in 0..horizon {
        let q = rep.rp_matrix(n) - rep.rp_matrix(n + 1);
        seed_cols.push(q);
    }
    let stacked = hstack(&seed_cols, dim);
    let mut basis = orthonormal_range_abs(&stacked, SUBSPACE_TOL);
    for _ in 0..=dim {
        if basis.ncols() == 0 {
            break;
        }
        let mut cols = vec![basis.clone()];
        for g in &rep.t[1] {
            cols.push(g * &basis);
            cols.push(g.adjoint() * &basis);
        }
        let next = orthonormal_range_abs(&hstack(&cols, dim), SUBSPACE_TOL);
        if next.ncols() == basis.ncols() {
            basis = next;
            break;
        }
        basis = next;
    }
    basis
}

fn hstack(mats: &[CMatrix], rows: usize) -> CMatrix {
    let total: usize = mats.iter().map(|m| m.ncols()).sum();
    let mut out = CMatrix::zeros(rows, total);
    let mut c = 0;
    for m in mats {
        out.view_mut((0, c), (rows, m.ncols())).copy_from(m);
        c += m.ncols();
    }
    out
}

#[derive(Clone, Debug)]
pub struct WoldSplit {
    /// Orthonormal basis of the induced subspace `H'`.
    pub induced: CMatrix,
    /// Orthonormal basis of the fully-coisometric complement.
    pub coisometric: CMatrix,
    pub residuals: WoldResiduals,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct WoldResiduals {
    /// Max over `n <= horizon` of `||T̃_n T̃_n* - π(R_n')||`.
    pub hypothesis: f64,
    /// Max invariance defect of both subspaces under generators and adjoints.
    pub invariance: f64,
    /// `||(T̃_1 T̃_1*)|_{H'^⊥} - I||`.
    pub coisometry: f64,
    /// `||(T̃_horizon T̃_horizon*)|_{H'}||`, reported as purity evidence.
    pub induced_defect_at_horizon: f64,
}

/// Wold decomposition: split into an induced part and a fully-coisometric
/// part, after checking the hypothesis `T̃_n T̃_n* = π(R_n')`.
pub fn wold_decompose(rep: &CovariantRep, horizon: usize, tol: f64) -> Result<WoldSplit, RepError> {
    let horizon = horizon.min(rep.system.n_max);
    let mut hypothesis = 0.0_f64;
    for n in 1..=horizon {
        let residual = op_norm(&(rep.defect(n) - rep.rp_matrix(n)));
        hypothesis = hypothesis.max(residual);
        if residual > tol {
            return Err(RepError::HypothesisFailed { n, residual });
        }
    }

    let induced = induced_closure(rep, horizon);
    let dim = rep.dim();
    // Eigenvalues of I - P are 0 or 1; 0.5 splits them cleanly.
    let complement = orthonormal_range_abs(
        &(identity(dim) - &induced * induced.adjoint()),
        0.5,
    );

    let mut invariance = 0.0_f64;
    for basis in [&induced, &complement] {
        if basis.ncols() == 0 {
            continue;
        }
        let p = basis * basis.adjoint();
        let co = identity(dim) - &p;
        for g in &rep.t[1] {
            invariance = invariance.max(op_norm(&(&co * (g * &p))));
            invariance = invariance.max(op_norm(&(&co * (g.adjoint() * &p))));
        }
    }

    let coisometry = if complement.ncols() > 0 {
        let d1 = complement.adjoint() * rep.defect(1) * &complement;
        op_norm(&(d1 - identity(complement.ncols())))
    } else {
        0.0
    };
    let induced_defect_at_horizon = if induced.ncols() > 0 {
        op_norm(&(induced.adjoint() * rep.defect(horizon) * &induced))
    } else {
        0.0
    };

    Ok(WoldSplit {
        induced,
        coisometric: complement,
        residuals: WoldResiduals { hypothesis, invariance, coisometry, induced_defect_at_horizon },
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct KernelCheck {
    pub max_norm: f64,
    /// `(expression, ||π(S)||)` per sample.
    pub per_sample: Vec<(String, f64)>,
}

/// Evaluate in-ideal sample expressions under the representation; for an
/// essential representation the results must vanish.
pub fn kernel_ideal_check(
    rep: &CovariantRep,
    samples: &[crate::expr::Expr],
) -> Result<KernelCheck, crate::expr::ExprError> {
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut max_norm = 0.0_f64;
    for s in samples {
        let m = crate::expr::eval_rep(s, rep)?;
        let norm = op_norm(&m);
        max_norm = max_norm.max(norm);
        per_sample.push((crate::expr::print(s), norm));
    }
    Ok(KernelCheck { max_norm, per_sample })
}

/// Largest principal-angle sine between a computed and an expected subspace.
pub fn subspace_error(computed: &CMatrix, expected: &CMatrix) -> f64 {
    if computed.ncols() == 0 && expected.ncols() == 0 {
        return 0.0;
    }
    if computed.ncols() == 0 || expected.ncols() == 0 {
        return 1.0;
    }
    subspace_angle_sin(computed, expected)
}
