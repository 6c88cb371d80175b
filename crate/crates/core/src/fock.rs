//! Truncated Fock module, shift operators and the degree/band machinery.
//!
//! Operators are stored as level-block matrices with two pieces of
//! metadata: the set of signed degrees that may contribute, and a
//! per-source-column exactness flag. A column `m` is exact when every block
//! of the truncated operator in that column agrees with the untruncated
//! operator on the full Fock module — equivalently, when no partial
//! application of the defining word can climb past the truncation level.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{op_norm, C64, CMatrix};
use crate::systems::SubproductSystem;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("level {level} exceeds the truncation level {max}")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("gauge parameter must be unimodular to 1e-12")]
    NotUnimodular,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Block layout of a level-graded space `⊕_n V_n`.
#[derive(Debug, PartialEq, Eq)]
pub struct LevelGrading {
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub total: usize,
}

impl LevelGrading {
    pub fn new(dims: Vec<usize>) -> Arc<Self> {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in &dims {
            offsets.push(acc);
            acc += d;
        }
        Arc::new(LevelGrading { dims, offsets, total: acc })
    }

    /// Highest level index.
    pub fn last(&self) -> usize {
        self.dims.len() - 1
    }
}

/// A level-block operator with degree and exactness metadata.
#[derive(Clone, Debug)]
pub struct LevelOp {
    pub levels: Arc<LevelGrading>,
    pub blocks: BTreeMap<(usize, usize), CMatrix>,
    pub degrees: BTreeSet<i64>,
    pub exact: Vec<bool>,
}

impl LevelOp {
    pub fn zero(levels: Arc<LevelGrading>) -> Self {
        let n = levels.dims.len();
        LevelOp { levels, blocks: BTreeMap::new(), degrees: BTreeSet::new(), exact: vec![true; n] }
    }

    pub fn identity(levels: Arc<LevelGrading>) -> Self {
        let mut op = LevelOp::zero(levels.clone());
        for (n, &d) in levels.dims.iter().enumerate() {
            op.blocks.insert((n, n), CMatrix::identity(d, d));
        }
        op.degrees.insert(0);
        op
    }

    /// Single block at `(row_level, col_level)`; `exact` flags supplied by
    /// the caller alongside the block's degree.
    pub fn from_block(
        levels: Arc<LevelGrading>,
        row_level: usize,
        col_level: usize,
        m: CMatrix,
        exact: Vec<bool>,
    ) -> Self {
        assert_eq!(m.nrows(), levels.dims[row_level]);
        assert_eq!(m.ncols(), levels.dims[col_level]);
        let mut blocks = BTreeMap::new();
        blocks.insert((row_level, col_level), m);
        let mut degrees = BTreeSet::new();
        degrees.insert(row_level as i64 - col_level as i64);
        LevelOp { levels, blocks, degrees, exact }
    }

    fn same_space(&self, other: &LevelOp) {
        assert!(
            Arc::ptr_eq(&self.levels, &other.levels) || self.levels.dims == other.levels.dims,
            "operators on different level gradings"
        );
    }

    pub fn add(&self, other: &LevelOp) -> LevelOp {
        self.same_space(other);
        let mut blocks = self.blocks.clone();
        for (&k, b) in &other.blocks {
            blocks
                .entry(k)
                .and_modify(|m| *m += b)
                .or_insert_with(|| b.clone());
        }
        let degrees = self.degrees.union(&other.degrees).cloned().collect();
        let exact = self
            .exact
            .iter()
            .zip(&other.exact)
            .map(|(&a, &b)| a && b)
            .collect();
        LevelOp { levels: self.levels.clone(), blocks, degrees, exact }
    }

    pub fn scale(&self, c: C64) -> LevelOp {
        let mut out = self.clone();
        for b in out.blocks.values_mut() {
            *b *= c;
        }
        out
    }

    pub fn sub(&self, other: &LevelOp) -> LevelOp {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, rhs: &LevelOp) -> LevelOp {
        self.same_space(rhs);
        let last = self.levels.last() as i64;
        let mut blocks: BTreeMap<(usize, usize), CMatrix> = BTreeMap::new();
        for (&(rb, cb), b) in &rhs.blocks {
            for (&(ra, ca), a) in &self.blocks {
                if ca == rb {
                    let prod = a * b;
                    blocks
                        .entry((ra, cb))
                        .and_modify(|m| *m += &prod)
                        .or_insert(prod);
                }
            }
        }
        let mut degrees = BTreeSet::new();
        for &x in &self.degrees {
            for &y in &rhs.degrees {
                degrees.insert(x + y);
            }
        }
        let exact = (0..=last)
            .map(|m| {
                rhs.exact[m as usize]
                    && rhs.degrees.iter().all(|&k| {
                        let t = m + k;
                        if t < 0 {
                            true
                        } else if t > last {
                            false
                        } else {
                            self.exact[t as usize]
                        }
                    })
            })
            .collect();
        LevelOp { levels: self.levels.clone(), blocks, degrees, exact }
    }

    pub fn adjoint(&self) -> LevelOp {
        let last = self.levels.last() as i64;
        let mut blocks = BTreeMap::new();
        for (&(r, c), b) in &self.blocks {
            blocks.insert((c, r), b.adjoint());
        }
        let degrees = self.degrees.iter().map(|&k| -k).collect();
        let exact = (0..=last)
            .map(|m| {
                self.degrees.iter().all(|&k| {
                    let t = m - k;
                    if t < 0 {
                        true
                    } else if t > last {
                        false
                    } else {
                        self.exact[t as usize]
                    }
                })
            })
            .collect();
        LevelOp { levels: self.levels.clone(), blocks, degrees, exact }
    }

    /// Conjugation by the gauge unitary `W_λ`: block `(r, c)` picks up
    /// `λ^{r-c}`.
    pub fn gauge(&self, lambda: C64) -> LevelOp {
        let mut out = self.clone();
        for (&(r, c), b) in out.blocks.iter_mut() {
            let k = r as i32 - c as i32;
            *b *= lambda.powi(k);
        }
        out
    }

    /// Band extraction `Φ_k`: keep exactly the blocks with `row - col = k`.
    pub fn band(&self, k: i64) -> LevelOp {
        let blocks: BTreeMap<(usize, usize), CMatrix> = self
            .blocks
            .iter()
            .filter(|(&(r, c), _)| r as i64 - c as i64 == k)
            .map(|(&key, b)| (key, b.clone()))
            .collect();
        let mut degrees = BTreeSet::new();
        if self.degrees.contains(&k) {
            degrees.insert(k);
        }
        LevelOp {
            levels: self.levels.clone(),
            blocks,
            degrees,
            exact: self.exact.clone(),
        }
    }

    /// Fejér mean `σ_n = Σ_{|k| <= n} (1 - |k|/(n+1)) Φ_k`, evaluated
    /// exactly on the band decomposition.
    pub fn fejer(&self, order: usize) -> LevelOp {
        let mut out = LevelOp::zero(self.levels.clone());
        out.exact = self.exact.clone();
        for k in -(order as i64)..=(order as i64) {
            let w = 1.0 - k.unsigned_abs() as f64 / (order as f64 + 1.0);
            out = out.add(&self.band(k).scale(C64::new(w, 0.0)));
        }
        out
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.levels.total, self.levels.total);
        for (&(r, c), b) in &self.blocks {
            let (ro, co) = (self.levels.offsets[r], self.levels.offsets[c]);
            m.view_mut((ro, co), (b.nrows(), b.ncols())).copy_from(b);
        }
        m
    }

    pub fn op_norm(&self) -> f64 {
        op_norm(&self.to_dense())
    }

    /// The column `S Q_m` as a `total × dim_m` matrix.
    pub fn column_matrix(&self, m: usize) -> CMatrix {
        let mut out = CMatrix::zeros(self.levels.total, self.levels.dims[m]);
        for (&(r, c), b) in &self.blocks {
            if c == m {
                out.view_mut((self.levels.offsets[r], 0), (b.nrows(), b.ncols()))
                    .copy_from(b);
            }
        }
        out
    }

    /// `||S Q_m||` on the truncation.
    pub fn column_norm(&self, m: usize) -> f64 {
        op_norm(&self.column_matrix(m))
    }

    /// The tail `S R_n'` as a matrix over columns of level at least `from`.
    pub fn tail_matrix(&self, from: usize) -> CMatrix {
        let width = self.levels.total - self.levels.offsets[from];
        let mut out = CMatrix::zeros(self.levels.total, width);
        for (&(r, c), b) in &self.blocks {
            if c >= from {
                let co = self.levels.offsets[c] - self.levels.offsets[from];
                out.view_mut((self.levels.offsets[r], co), (b.nrows(), b.ncols()))
                    .copy_from(b);
            }
        }
        out
    }

    /// `||S R_n'||` on the truncation.
    pub fn tail_norm(&self, from: usize) -> f64 {
        op_norm(&self.tail_matrix(from))
    }

    pub fn residual(&self, other: &LevelOp) -> f64 {
        self.sub(other).op_norm()
    }

    /// Residual restricted to columns exact for both operands.
    pub fn residual_on_exact(&self, other: &LevelOp) -> f64 {
        let diff = self.sub(other);
        let mut worst = 0.0_f64;
        for m in 0..self.levels.dims.len() {
            if self.exact[m] && other.exact[m] {
                worst = worst.max(diff.column_norm(m));
            }
        }
        worst
    }

    /// Largest level whose column is exact.
    pub fn last_exact(&self) -> Option<usize> {
        (0..self.exact.len()).rev().find(|&m| self.exact[m])
    }
}

/// The truncated Fock module of a subproduct system.
#[derive(Clone, Debug)]
pub struct Fock {
    pub system: Arc<SubproductSystem>,
    pub levels: Arc<LevelGrading>,
}

impl Fock {
    pub fn new(system: Arc<SubproductSystem>) -> Self {
        let dims = system.fiber_dims();
        Fock { system, levels: LevelGrading::new(dims) }
    }

    pub fn n_max(&self) -> usize {
        self.system.n_max
    }

    pub fn total_dim(&self) -> usize {
        self.levels.total
    }

    fn check_level(&self, n: usize) -> Result<(), FockError> {
        if n > self.n_max() {
            Err(FockError::LevelOutOfRange { level: n, max: self.n_max() })
        } else {
            Ok(())
        }
    }

    /// Unit coefficient vector for the `kappa`-th basis vector of `X(n)`.
    pub fn basis_vector(&self, n: usize, kappa: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.system.fiber_dim(n)];
        v[kappa] = C64::new(1.0, 0.0);
        v
    }

    /// The shift `S_n(ζ)`; `n = 0` is the block-diagonal left action `φ_∞`.
    pub fn shift(&self, n: usize, coeffs: &[C64]) -> Result<FockOperator, FockError> {
        self.check_level(n)?;
        if coeffs.len() != self.system.fiber_dim(n) {
            return Err(FockError::DimensionMismatch(format!(
                "X({n}) has dimension {}, got {} coefficients",
                self.system.fiber_dim(n),
                coeffs.len()
            )));
        }
        if n == 0 {
            return Ok(self.phi(coeffs));
        }
        let nmax = self.n_max();
        let zeta_e = self.system.embed(n, coeffs);
        let mut op = LevelOp::zero(self.levels.clone());
        op.degrees.insert(n as i64);
        op.exact = (0..=nmax).map(|m| m + n <= nmax).collect();
        for m in 0..=(nmax - n) {
            let target = &self.system.tensors[n + m];
            let jm = &self.system.j[m];
            let mut k = CMatrix::zeros(target.dim(), self.system.fiber_dim(m));
            for w in 0..target.dim() {
                let (u, v) = self.system.split_index(n, m, w);
                let z = zeta_e[u];
                if z != C64::new(0.0, 0.0) {
                    for col in 0..jm.ncols() {
                        k[(w, col)] = z * jm[(v, col)];
                    }
                }
            }
            let block = self.system.j[n + m].adjoint() * k;
            op.blocks.insert((n + m, m), block);
        }
        Ok(FockOperator { fock: self.clone(), op })
    }

    pub fn shift_basis(&self, n: usize, kappa: usize) -> Result<FockOperator, FockError> {
        let v = self.basis_vector(n, kappa);
        self.shift(n, &v)
    }

    /// `φ_∞(a)` for `a ∈ C^q`.
    pub fn phi(&self, a: &[C64]) -> FockOperator {
        assert_eq!(a.len(), self.system.q);
        let mut op = LevelOp::zero(self.levels.clone());
        op.degrees.insert(0);
        for m in 0..=self.n_max() {
            op.blocks.insert((m, m), self.system.fibers[m].left_action(a));
        }
        FockOperator { fock: self.clone(), op }
    }

    pub fn identity_op(&self) -> FockOperator {
        FockOperator { fock: self.clone(), op: LevelOp::identity(self.levels.clone()) }
    }

    pub fn zero_op(&self) -> FockOperator {
        FockOperator { fock: self.clone(), op: LevelOp::zero(self.levels.clone()) }
    }

    /// Level projection `Q_n`.
    pub fn q_proj(&self, n: usize) -> Result<FockOperator, FockError> {
        self.check_level(n)?;
        let d = self.levels.dims[n];
        let op = LevelOp::from_block(
            self.levels.clone(),
            n,
            n,
            CMatrix::identity(d, d),
            vec![true; self.n_max() + 1],
        );
        Ok(FockOperator { fock: self.clone(), op })
    }

    /// `R_n = Q_0 + ... + Q_n`.
    pub fn r_proj(&self, n: usize) -> Result<FockOperator, FockError> {
        self.check_level(n)?;
        let mut acc = self.zero_op();
        for k in 0..=n {
            acc = &acc + &self.q_proj(k)?;
        }
        Ok(acc)
    }

    /// `R_n' = I - R_{n-1}`, exact on the truncation for every column.
    pub fn rp_proj(&self, n: usize) -> Result<FockOperator, FockError> {
        self.check_level(n)?;
        let mut acc = self.zero_op();
        for k in n..=self.n_max() {
            acc = &acc + &self.q_proj(k)?;
        }
        Ok(acc)
    }

    /// All level projections `(Q_n, R_n, R_n')` for `n <= N`.
    #[allow(clippy::type_complexity)]
    pub fn level_projections(
        &self,
    ) -> (Vec<FockOperator>, Vec<FockOperator>, Vec<FockOperator>) {
        let q = (0..=self.n_max()).map(|n| self.q_proj(n).unwrap()).collect();
        let r = (0..=self.n_max()).map(|n| self.r_proj(n).unwrap()).collect();
        let rp = (0..=self.n_max()).map(|n| self.rp_proj(n).unwrap()).collect();
        (q, r, rp)
    }

    /// Residual of the compressed-adjoint identity for `S_n(ζ)*`:
    /// block `(m, n+m)` must equal `J_m* (<ζ_E| ⊗ I) J_{n+m}`.
    pub fn adjoint_action_check(&self, n: usize, coeffs: &[C64]) -> Result<f64, FockError> {
        let s = self.shift(n, coeffs)?;
        let sadj = s.adjoint();
        if n == 0 {
            let conj: Vec<C64> = coeffs.iter().map(|z| z.conj()).collect();
            return Ok(sadj.op.residual(&self.phi(&conj).op));
        }
        let zeta_e = self.system.embed(n, coeffs);
        let mut worst = 0.0_f64;
        for m in 0..=(self.n_max() - n) {
            let tdim = self.system.tensors[n + m].dim();
            let mut pair = CMatrix::zeros(self.system.tensors[m].dim(), tdim);
            for w in 0..tdim {
                let (u, v) = self.system.split_index(n, m, w);
                pair[(v, w)] += zeta_e[u].conj();
            }
            let formula = self.system.j[m].adjoint() * pair * &self.system.j[n + m];
            let direct = sadj
                .op
                .blocks
                .get(&(m, n + m))
                .cloned()
                .unwrap_or_else(|| CMatrix::zeros(formula.nrows(), formula.ncols()));
            worst = worst.max(op_norm(&(direct - formula)));
        }
        Ok(worst)
    }
}

/// An operator on the truncated Fock module.
#[derive(Clone, Debug)]
pub struct FockOperator {
    pub fock: Fock,
    pub op: LevelOp,
}

impl FockOperator {
    pub fn adjoint(&self) -> FockOperator {
        FockOperator { fock: self.fock.clone(), op: self.op.adjoint() }
    }

    pub fn scale(&self, c: C64) -> FockOperator {
        FockOperator { fock: self.fock.clone(), op: self.op.scale(c) }
    }

    /// `W_λ S W_λ*` for unimodular `λ`; a degree-`k` monomial becomes
    /// `λ^k S`.
    pub fn gauge_conjugate(&self, lambda: C64) -> Result<FockOperator, FockError> {
        if (lambda.norm() - 1.0).abs() > 1e-12 {
            return Err(FockError::NotUnimodular);
        }
        Ok(FockOperator { fock: self.fock.clone(), op: self.op.gauge(lambda) })
    }

    /// The degree-`k` spectral component `Φ_k(S)`.
    pub fn spectral_component(&self, k: i64) -> FockOperator {
        FockOperator { fock: self.fock.clone(), op: self.op.band(k) }
    }

    /// The Fejér mean `σ_n(S)`.
    pub fn fejer(&self, order: usize) -> FockOperator {
        FockOperator { fock: self.fock.clone(), op: self.op.fejer(order) }
    }

    pub fn op_norm(&self) -> f64 {
        self.op.op_norm()
    }

    pub fn column_norm(&self, m: usize) -> f64 {
        self.op.column_norm(m)
    }

    pub fn tail_norm(&self, from: usize) -> f64 {
        self.op.tail_norm(from)
    }

    pub fn residual(&self, other: &FockOperator) -> f64 {
        self.op.residual(&other.op)
    }

    pub fn exact_column(&self, m: usize) -> bool {
        self.op.exact[m]
    }

    fn same_fock(&self, other: &FockOperator) {
        assert!(
            Arc::ptr_eq(&self.fock.system, &other.fock.system),
            "operators live on different Fock modules"
        );
    }
}

impl std::ops::Add for &FockOperator {
    type Output = FockOperator;
    fn add(self, rhs: &FockOperator) -> FockOperator {
        self.same_fock(rhs);
        FockOperator { fock: self.fock.clone(), op: self.op.add(&rhs.op) }
    }
}

impl std::ops::Sub for &FockOperator {
    type Output = FockOperator;
    fn sub(self, rhs: &FockOperator) -> FockOperator {
        self.same_fock(rhs);
        FockOperator { fock: self.fock.clone(), op: self.op.sub(&rhs.op) }
    }
}

impl std::ops::Mul for &FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: &FockOperator) -> FockOperator {
        self.same_fock(rhs);
        FockOperator { fock: self.fock.clone(), op: self.op.mul(&rhs.op) }
    }
}

/// `p_{n+m}(ζ ⊗ η)` in `X(n+m)` coordinates.
pub fn compress_pair(
    system: &SubproductSystem,
    n: usize,
    m: usize,
    zeta: &[C64],
    eta: &[C64],
) -> Vec<C64> {
    let ze = system.embed(n, zeta);
    let he = system.embed(m, eta);
    let t = &system.tensors[n + m];
    let mut v = nalgebra::DVector::zeros(t.dim());
    for w in 0..t.dim() {
        let (u, vv) = system.split_index(n, m, w);
        v[w] = ze[u] * he[vv];
    }
    let out = system.j[n + m].adjoint() * v;
    out.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::scalar;
    use crate::systems::{build_product, build_quiver, build_symmetric};
    use nalgebra::DMatrix;

    fn ssp2(n: usize) -> Fock {
        Fock::new(Arc::new(build_symmetric(2, n).unwrap()))
    }

    #[test]
    fn shift_on_vacuum_is_isometric() {
        let f = ssp2(4);
        let s = f.shift_basis(1, 0).unwrap();
        let block = &s.op.blocks[&(1, 0)];
        assert!((op_norm(block) - 1.0).abs() < 1e-12);
        assert_eq!(block[(0, 0)], scalar(1.0, 0.0));
    }

    #[test]
    fn quiver_shift_matches_paper_coefficient() {
        // P = [[1,1],[1,0]]; S_1(f_11) f_12 = sqrt(P_21 P_11 / P^2_21) f_12 = f_12.
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let x = Arc::new(build_quiver(&p, 4).unwrap());
        let f = Fock::new(x.clone());
        let i11 = x.fibers[1].label_index("f11").unwrap();
        let i12 = x.fibers[1].label_index("f12").unwrap();
        let s = f.shift_basis(1, i11).unwrap();
        let block = &s.op.blocks[&(2, 1)];
        let out12 = x.fibers[2].label_index("f12").unwrap();
        for r in 0..block.nrows() {
            let expect = if r == out12 { 1.0 } else { 0.0 };
            assert!(
                (block[(r, i12)] - scalar(expect, 0.0)).norm() < 1e-12,
                "row {r}: {}",
                block[(r, i12)]
            );
        }
    }

    #[test]
    fn quiver_adjoint_matches_paper_coefficient() {
        // S_1(f_11)* f_11^{(2)} = sqrt(P_11 P_11 / P^2_11) f_11 = f_11 / sqrt(2).
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let x = Arc::new(build_quiver(&p, 4).unwrap());
        let f = Fock::new(x.clone());
        let i11 = x.fibers[1].label_index("f11").unwrap();
        let j11 = x.fibers[2].label_index("f11").unwrap();
        let adj = f.shift_basis(1, i11).unwrap().adjoint();
        let block = &adj.op.blocks[&(1, 2)];
        let expect = (0.5_f64).sqrt();
        assert!((block[(i11, j11)] - scalar(expect, 0.0)).norm() < 1e-14);
        // On equal levels the adjoint is the rigging: S_n*(f_ij) f_kl = δ f_l.
        let block0 = &adj.op.blocks[&(0, 1)];
        for (col, bv) in x.fibers[1].basis.iter().enumerate() {
            for row in 0..2 {
                let expect = if col == i11 && row == bv.right { 1.0 } else { 0.0 };
                assert!((block0[(row, col)] - scalar(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn level_projection_families() {
        let f = ssp2(3);
        let (q, r, rp) = f.level_projections();
        assert_eq!(q.len(), 4);
        for n in 0..3usize {
            // R_n + R_{n+1}' = I.
            assert_eq!((&r[n] + &rp[n + 1]).residual(&f.identity_op()), 0.0);
        }
        assert_eq!(r[3].residual(&f.identity_op()), 0.0);
        assert_eq!(rp[0].residual(&f.identity_op()), 0.0);
    }

    #[test]
    fn shift_semigroup_identity() {
        for fock in [
            ssp2(5),
            Fock::new(Arc::new(build_product(2, 4).unwrap())),
            Fock::new(Arc::new(
                build_quiver(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]), 4).unwrap(),
            )),
        ] {
            let sys = &fock.system;
            for n in 1..sys.n_max {
                for m in 1..=(sys.n_max - n) {
                    for zi in 0..sys.fiber_dim(n) {
                        for hi in 0..sys.fiber_dim(m) {
                            let z = fock.basis_vector(n, zi);
                            let h = fock.basis_vector(m, hi);
                            let lhs = &fock.shift(n, &z).unwrap() * &fock.shift(m, &h).unwrap();
                            let compressed = compress_pair(sys, n, m, &z, &h);
                            let rhs = fock.shift(n + m, &compressed).unwrap();
                            assert!(
                                lhs.op.residual_on_exact(&rhs.op) < 1e-10,
                                "family {:?} n={n} m={m}",
                                sys.family
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn adjoint_is_compressed_full_fock_adjoint() {
        let f = ssp2(6);
        for kappa in 0..2 {
            let v = f.basis_vector(1, kappa);
            assert!(f.adjoint_action_check(1, &v).unwrap() < 1e-12);
        }
        let v = f.basis_vector(2, 1);
        assert!(f.adjoint_action_check(2, &v).unwrap() < 1e-12);
    }

    #[test]
    fn adjoint_kills_low_levels() {
        let f = ssp2(4);
        let s = f.shift_basis(2, 0).unwrap().adjoint();
        // No block with source level below 2.
        assert!(s.op.blocks.keys().all(|&(_, c)| c >= 2));
        // Degree-0 adjoint is the conjugate left action.
        let a = [scalar(0.3, -0.7)];
        let phi_adj = f.phi(&a).adjoint();
        let phi_conj = f.phi(&[scalar(0.3, 0.7)]);
        assert_eq!(phi_adj.residual(&phi_conj), 0.0);
    }

    #[test]
    fn level_projection_algebra() {
        let f = ssp2(4);
        let mut sum = f.zero_op();
        for n in 0..=4 {
            sum = &sum + &f.q_proj(n).unwrap();
        }
        assert_eq!(sum.residual(&f.identity_op()), 0.0);

        for n in 0..=4 {
            for m in 0..=4 {
                let qn = f.q_proj(n).unwrap();
                let qm = f.q_proj(m).unwrap();
                let prod = &qn * &qm;
                let expect = if n == m { qn.clone() } else { f.zero_op() };
                assert_eq!(prod.residual(&expect), 0.0);

                let rn = f.rp_proj(n).unwrap();
                let rm = f.rp_proj(m).unwrap();
                let rmax = f.rp_proj(n.max(m)).unwrap();
                assert_eq!((&rn * &rm).residual(&rmax), 0.0);
            }
        }
    }

    #[test]
    fn gauge_action_scales_monomials() {
        let f = ssp2(5);
        let s = f.shift_basis(1, 0).unwrap();
        assert_eq!(s.gauge_conjugate(scalar(1.0, 0.0)).unwrap().residual(&s), 0.0);

        let i = scalar(0.0, 1.0);
        let rotated = s.gauge_conjugate(i).unwrap();
        assert!(rotated.residual(&s.scale(i)) < 1e-15);

        let deg0 = &s * &s.adjoint();
        assert!(deg0.gauge_conjugate(i).unwrap().residual(&deg0) < 1e-15);

        assert!(matches!(
            s.gauge_conjugate(scalar(0.5, 0.0)),
            Err(FockError::NotUnimodular)
        ));

        // Gauge conjugation is isometric.
        let mixed = &s + &deg0;
        let lam = C64::from_polar(1.0, 0.77);
        let g = mixed.gauge_conjugate(lam).unwrap();
        assert!((g.op_norm() - mixed.op_norm()).abs() < 1e-12);
    }

    #[test]
    fn bands_partition_the_operator() {
        let f = ssp2(5);
        let s1 = f.shift_basis(1, 0).unwrap();
        let s = &(&s1 * &s1.adjoint()) + &s1;
        let mut sum = f.zero_op();
        for k in -5..=5 {
            sum = &sum + &s.spectral_component(k);
        }
        assert_eq!(sum.residual(&s), 0.0);

        // Band of a degree-m monomial.
        let s2 = f.shift_basis(2, 1).unwrap();
        assert_eq!(s2.spectral_component(2).residual(&s2), 0.0);
        assert_eq!(s2.spectral_component(1).op_norm(), 0.0);

        let deg0 = &s1 * &s1.adjoint();
        assert_eq!(deg0.spectral_component(0).residual(&deg0), 0.0);
    }

    #[test]
    fn fejer_means() {
        let f = ssp2(5);
        let s1 = f.shift_basis(1, 0).unwrap();
        let s = &(&s1 * &s1.adjoint()) + &s1;

        // sigma_0 = Phi_0.
        assert_eq!(s.fejer(0).residual(&s.spectral_component(0)), 0.0);

        // Banded correction formula for order >= bandwidth.
        for order in 1..6usize {
            let mut corr = f.zero_op();
            for k in -1i64..=1 {
                let w = k.unsigned_abs() as f64 / (order as f64 + 1.0);
                corr = &corr + &s.spectral_component(k).scale(scalar(w, 0.0));
            }
            let expect = &s - &corr;
            assert!(s.fejer(order).residual(&expect) < 1e-14);
            assert!(s.fejer(order).op_norm() <= s.op_norm() + 1e-10);
        }
    }

    #[test]
    fn phi_is_unital_homomorphism_with_bimodule_property() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let x = Arc::new(build_quiver(&p, 4).unwrap());
        let f = Fock::new(x.clone());

        let a = [scalar(0.5, 0.2), scalar(-1.0, 0.1)];
        let b = [scalar(0.0, 1.0), scalar(2.0, 0.0)];
        let ab: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let lhs = &f.phi(&a) * &f.phi(&b);
        assert!(lhs.residual(&f.phi(&ab)) < 1e-15);
        let one = [scalar(1.0, 0.0), scalar(1.0, 0.0)];
        assert_eq!(f.phi(&one).residual(&f.identity_op()), 0.0);

        // S_n(a·ζ) = φ(a) S_n(ζ) and S_n(ζ·a) = S_n(ζ) φ(a).
        for n in 1..=2usize {
            for kappa in 0..x.fiber_dim(n) {
                let base = f.basis_vector(n, kappa);
                let left = x.fibers[n].basis[kappa].left;
                let right = x.fibers[n].basis[kappa].right;
                let s = f.shift(n, &base).unwrap();

                let mut lz = base.clone();
                for c in lz.iter_mut() {
                    *c *= a[left];
                }
                assert!(f.shift(n, &lz).unwrap().residual(&(&f.phi(&a) * &s)) < 1e-12);

                let mut rz = base.clone();
                for c in rz.iter_mut() {
                    *c *= a[right];
                }
                assert!(f.shift(n, &rz).unwrap().residual(&(&s * &f.phi(&a))) < 1e-12);
            }
        }
    }

    #[test]
    fn quiver_left_action_is_sum_of_rank_ones() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let x = Arc::new(build_quiver(&p, 4).unwrap());
        let f = Fock::new(x.clone());
        for t in 0..2usize {
            let mut unit = vec![scalar(0.0, 0.0); 2];
            unit[t] = scalar(1.0, 0.0);
            let phi = f.phi(&unit);
            for n in 1..=3usize {
                let dim = x.fiber_dim(n);
                let mut rank_ones = CMatrix::zeros(dim, dim);
                for (i, bv) in x.fibers[n].basis.iter().enumerate() {
                    if bv.left == t {
                        rank_ones[(i, i)] = scalar(1.0, 0.0);
                    }
                }
                assert_eq!(phi.op.blocks[&(n, n)], rank_ones);
            }
        }
    }

    #[test]
    fn exactness_flags_track_truncation() {
        let f = ssp2(4);
        let s1 = f.shift_basis(1, 0).unwrap();
        assert_eq!(s1.op.exact, vec![true, true, true, true, false]);
        assert_eq!(s1.adjoint().op.exact, vec![true; 5]);

        let prod = &s1.adjoint() * &s1; // S* S: loses the top column
        assert_eq!(prod.op.exact, vec![true, true, true, true, false]);
        let prod2 = &s1 * &s1.adjoint(); // S S*: exact everywhere
        assert_eq!(prod2.op.exact, vec![true; 5]);

        let sum = &s1 + &f.q_proj(0).unwrap();
        assert_eq!(sum.op.exact, vec![true, true, true, true, false]);
    }
}
