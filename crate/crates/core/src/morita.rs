//! Strong Morita equivalence at finite dimension: the imprimitivity
//! bimodule `M = C^k` between `M_k(C)` and `C`, the system induced from a
//! scalar-base system `Y`, and the linking system `Z` acting on
//! `F_Z' = F_Y ⊕ (C^k ⊗ F_Y)`.
//!
//! Coordinates: `X(n) ⊗ M` is identified with `M ⊗ Y(n)` through the
//! canonical isomorphisms `W_n`, which become identity permutations. An
//! `X`-side shift then acts on `C^k ⊗ F_Y` as `_A<x,y> ⊗ S^Y(η)`, so every
//! linking-word computation reduces to `(k x k) ⊗ (Y-side block)` algebra.
//! Lower-corner block layout per level: `M` coordinate outer, `Y(n)` inner.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::fock::{Fock, FockError, FockOperator, LevelGrading, LevelOp};
use crate::linalg::{kron, op_norm, C64, CMatrix};
use crate::systems::SubproductSystem;

#[derive(Debug, Error)]
pub enum MoritaError {
    #[error("the Y system must live over scalars (q = 1)")]
    NotScalarBase,
    #[error("k must be at least 1")]
    BadK,
    #[error("T2 must be a monomial (a single signed degree), got degrees {0:?}")]
    NotMonomial(Vec<i64>),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// An element of `Z(n)` presented by its four corners. Tensor corners are
/// sums of elementary tensors.
#[derive(Clone, Debug)]
pub struct LinkingGenerator {
    pub level: usize,
    /// `η_1 ∈ Y(n)`.
    pub eta1: Vec<C64>,
    /// `Σ η ⊗ w̃ ∈ Y(n) ⊗ M̃` as `(η, w)` pairs.
    pub eta2: Vec<(Vec<C64>, Vec<C64>)>,
    /// `ζ_1 ⊗ v ∈ X(n) ⊗ M ≅ M ⊗ Y(n)` as `(u, θ)` pairs (`u ∈ C^k`).
    pub zeta1: Vec<(Vec<C64>, Vec<C64>)>,
    /// `ζ_2 ∈ X(n) ≅ M_k ⊗ Y(n)` as `(A, η)` pairs.
    pub zeta2: Vec<(CMatrix, Vec<C64>)>,
}

impl LinkingGenerator {
    pub fn zero(level: usize, y_dim: usize) -> Self {
        LinkingGenerator {
            level,
            eta1: vec![C64::new(0.0, 0.0); y_dim],
            eta2: Vec::new(),
            zeta1: Vec::new(),
            zeta2: Vec::new(),
        }
    }

    /// Corner `(η_1, 0, 0, 0)`.
    pub fn upper(level: usize, eta1: Vec<C64>) -> Self {
        LinkingGenerator { level, eta1, eta2: Vec::new(), zeta1: Vec::new(), zeta2: Vec::new() }
    }

    /// Corner `(0, 0, 0, ζ_2)` with `ζ_2 = Σ A ⊗ η`.
    pub fn lower(level: usize, y_dim: usize, zeta2: Vec<(CMatrix, Vec<C64>)>) -> Self {
        LinkingGenerator {
            level,
            eta1: vec![C64::new(0.0, 0.0); y_dim],
            eta2: Vec::new(),
            zeta1: Vec::new(),
            zeta2,
        }
    }
}

/// One factor of a word in the linking Toeplitz algebra.
#[derive(Clone, Debug)]
pub struct WordFactor {
    pub gen: LinkingGenerator,
    pub adjoint: bool,
}

#[derive(Clone, Debug, Default)]
pub struct LinkingWord {
    pub factors: Vec<WordFactor>,
}

/// The finite Morita context between `M_k(C)` and `C` over a scalar-base
/// system `Y`.
pub struct MoritaContext {
    pub k: usize,
    pub fock_y: Fock,
    /// `F_Z'` levels: `(1 + k) * dim Y(n)`.
    pub levels_link: Arc<LevelGrading>,
    /// `F_X ⊗ M ≅ C^k ⊗ F_Y` levels: `k * dim Y(n)`.
    pub levels_xm: Arc<LevelGrading>,
}

pub fn build_context(k: usize, y: Arc<SubproductSystem>) -> Result<MoritaContext, MoritaError> {
    if k < 1 {
        return Err(MoritaError::BadK);
    }
    if y.q != 1 {
        return Err(MoritaError::NotScalarBase);
    }
    let fock_y = Fock::new(y);
    let dims = fock_y.system.fiber_dims();
    let levels_link = LevelGrading::new(dims.iter().map(|&d| (1 + k) * d).collect());
    let levels_xm = LevelGrading::new(dims.iter().map(|&d| k * d).collect());
    Ok(MoritaContext { k, fock_y, levels_link, levels_xm })
}

impl MoritaContext {
    pub fn y(&self) -> &SubproductSystem {
        &self.fock_y.system
    }

    pub fn n_max(&self) -> usize {
        self.fock_y.n_max()
    }

    pub fn y_dim(&self, n: usize) -> usize {
        self.y().fiber_dim(n)
    }

    /// Underlying dimension of the induced fiber `X(n) = M ⊗ Y(n) ⊗ M̃`.
    pub fn x_dim(&self, n: usize) -> usize {
        self.k * self.k * self.y_dim(n)
    }

    /// `dim Z(n) = (1 + k)^2 dim Y(n)`, summed over the four corners.
    pub fn z_dim(&self, n: usize) -> usize {
        let y = self.y_dim(n);
        y + 2 * self.k * y + self.x_dim(n)
    }

    /// Projection `p` of `F_Z'` onto the `F_Y` summand.
    pub fn p_op(&self) -> LevelOp {
        let mut op = LevelOp::zero(self.levels_link.clone());
        op.degrees.insert(0);
        for n in 0..=self.n_max() {
            let y = self.y_dim(n);
            let total = self.levels_link.dims[n];
            let mut b = CMatrix::zeros(total, total);
            for i in 0..y {
                b[(i, i)] = C64::new(1.0, 0.0);
            }
            op.blocks.insert((n, n), b);
        }
        op
    }

    /// Projection `q` of `F_Z'` onto the `F_X ⊗ M` summand.
    pub fn q_op(&self) -> LevelOp {
        let mut op = LevelOp::zero(self.levels_link.clone());
        op.degrees.insert(0);
        for n in 0..=self.n_max() {
            let y = self.y_dim(n);
            let total = self.levels_link.dims[n];
            let mut b = CMatrix::zeros(total, total);
            for i in y..total {
                b[(i, i)] = C64::new(1.0, 0.0);
            }
            op.blocks.insert((n, n), b);
        }
        op
    }

    fn check_gen(&self, g: &LinkingGenerator) -> Result<(), MoritaError> {
        let y = self.y_dim(g.level);
        let ck = |v: &[C64], len: usize, what: &str| {
            if v.len() == len {
                Ok(())
            } else {
                Err(MoritaError::Dimension(format!(
                    "{what} expects length {len}, got {}",
                    v.len()
                )))
            }
        };
        ck(&g.eta1, y, "eta1")?;
        for (h, w) in &g.eta2 {
            ck(h, y, "eta2 fiber")?;
            ck(w, self.k, "eta2 bimodule vector")?;
        }
        for (u, th) in &g.zeta1 {
            ck(u, self.k, "zeta1 bimodule vector")?;
            ck(th, y, "zeta1 fiber")?;
        }
        for (a, h) in &g.zeta2 {
            if a.nrows() != self.k || a.ncols() != self.k {
                return Err(MoritaError::Dimension("zeta2 matrix must be k x k".into()));
            }
            ck(h, y, "zeta2 fiber")?;
        }
        Ok(())
    }

    /// `S_n^Z(α)` restricted to `F_Z'`, in coordinates.
    pub fn linking_shift(&self, g: &LinkingGenerator) -> Result<LevelOp, MoritaError> {
        self.check_gen(g)?;
        let n = g.level;
        let top = self.n_max();
        if n > top {
            return Err(MoritaError::Fock(FockError::LevelOutOfRange { level: n, max: top }));
        }
        let s_eta1 = self.fock_y.shift(n, &g.eta1)?;
        let s_eta2: Vec<(FockOperator, &Vec<C64>)> = g
            .eta2
            .iter()
            .map(|(h, w)| Ok((self.fock_y.shift(n, h)?, w)))
            .collect::<Result<_, FockError>>()?;
        let s_zeta1: Vec<(&Vec<C64>, FockOperator)> = g
            .zeta1
            .iter()
            .map(|(u, th)| Ok((u, self.fock_y.shift(n, th)?)))
            .collect::<Result<_, FockError>>()?;
        let s_zeta2: Vec<(&CMatrix, FockOperator)> = g
            .zeta2
            .iter()
            .map(|(a, h)| Ok((a, self.fock_y.shift(n, h)?)))
            .collect::<Result<_, FockError>>()?;

        let mut op = LevelOp::zero(self.levels_link.clone());
        op.degrees.insert(n as i64);
        op.exact = (0..=top).map(|m| m + n <= top).collect();
        for m in 0..=(top - n) {
            let (yr, yc) = (self.y_dim(n + m), self.y_dim(m));
            let rows = self.levels_link.dims[n + m];
            let cols = self.levels_link.dims[m];
            let mut b = CMatrix::zeros(rows, cols);

            let key = (n + m, m);
            // Upper-left: S^Y(η_1).
            if let Some(by) = s_eta1.op.blocks.get(&key) {
                b.view_mut((0, 0), (yr, yc)).copy_from(by);
            }
            // Upper-right: Σ S^Y(η) (⟨w| ⊗ I) = Σ (w̄ row) ⊗ S^Y(η).
            for (s, w) in &s_eta2 {
                if let Some(by) = s.op.blocks.get(&key) {
                    let wrow = CMatrix::from_fn(1, self.k, |_, j| w[j].conj());
                    let blk = kron(&wrow, by);
                    let mut view = b.view_mut((0, yc), (yr, self.k * yc));
                    view += blk;
                }
            }
            // Lower-left: Σ |u⟩ ⊗ S^Y(θ).
            for (u, s) in &s_zeta1 {
                if let Some(by) = s.op.blocks.get(&key) {
                    let ucol = CMatrix::from_fn(self.k, 1, |i, _| u[i]);
                    let blk = kron(&ucol, by);
                    let mut view = b.view_mut((yr, 0), (self.k * yr, yc));
                    view += blk;
                }
            }
            // Lower-right: Σ A ⊗ S^Y(η).
            for (a, s) in &s_zeta2 {
                if let Some(by) = s.op.blocks.get(&key) {
                    let blk = kron(a, by);
                    let mut view = b.view_mut((yr, yc), (self.k * yr, self.k * yc));
                    view += blk;
                }
            }
            op.blocks.insert(key, b);
        }
        Ok(op)
    }

    pub fn word_op(&self, word: &LinkingWord) -> Result<LevelOp, MoritaError> {
        let mut acc: Option<LevelOp> = None;
        for f in &word.factors {
            let mut g = self.linking_shift(&f.gen)?;
            if f.adjoint {
                g = g.adjoint();
            }
            acc = Some(match acc {
                None => g,
                Some(prev) => prev.mul(&g),
            });
        }
        Ok(acc.unwrap_or_else(|| LevelOp::identity(self.levels_link.clone())))
    }

    /// The `p`-corner of a linking operator, as an operator on `F_Y`.
    pub fn upper_corner(&self, op: &LevelOp) -> LevelOp {
        let mut out = LevelOp::zero(self.fock_y.levels.clone());
        out.degrees = op.degrees.clone();
        out.exact = op.exact.clone();
        for (&(r, c), b) in &op.blocks {
            let (yr, yc) = (self.y_dim(r), self.y_dim(c));
            out.blocks.insert((r, c), b.view((0, 0), (yr, yc)).into());
        }
        out
    }

    /// The `q`-corner, as an operator on `C^k ⊗ F_Y`.
    pub fn lower_corner(&self, op: &LevelOp) -> LevelOp {
        let mut out = LevelOp::zero(self.levels_xm.clone());
        out.degrees = op.degrees.clone();
        out.exact = op.exact.clone();
        for (&(r, c), b) in &op.blocks {
            let (yr, yc) = (self.y_dim(r), self.y_dim(c));
            out.blocks
                .insert((r, c), b.view((yr, yc), (self.k * yr, self.k * yc)).into());
        }
        out
    }

    /// `Σ A_γ ⊗ S^Y(η_γ)` on `C^k ⊗ F_Y`: an `X`-side shift in coordinates.
    pub fn x_shift_in_coords(
        &self,
        level: usize,
        terms: &[(CMatrix, Vec<C64>)],
    ) -> Result<LevelOp, MoritaError> {
        let top = self.n_max();
        let mut op = LevelOp::zero(self.levels_xm.clone());
        op.degrees.insert(level as i64);
        op.exact = (0..=top).map(|m| m + level <= top).collect();
        for m in 0..=(top - level) {
            let key = (level + m, m);
            let mut b = CMatrix::zeros(self.levels_xm.dims[level + m], self.levels_xm.dims[m]);
            for (a, h) in terms {
                let s = self.fock_y.shift(level, h)?;
                if let Some(by) = s.op.blocks.get(&key) {
                    b += kron(a, by);
                }
            }
            op.blocks.insert(key, b);
        }
        Ok(op)
    }

    /// Embed a `Y`-side operator in the `p`-corner of the linking picture.
    pub fn embed_upper(&self, s: &FockOperator) -> LevelOp {
        assert!(
            Arc::ptr_eq(&s.fock.system, &self.fock_y.system),
            "operator must live on the context's Y system"
        );
        let mut out = LevelOp::zero(self.levels_link.clone());
        out.degrees = s.op.degrees.clone();
        out.exact = s.op.exact.clone();
        for (&(r, c), b) in &s.op.blocks {
            let mut blk =
                CMatrix::zeros(self.levels_link.dims[r], self.levels_link.dims[c]);
            blk.view_mut((0, 0), (b.nrows(), b.ncols())).copy_from(b);
            out.blocks.insert((r, c), blk);
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MoritaValidation {
    pub imprimitivity_residual: f64,
    pub w_composition_residual: f64,
    pub z_subproduct_residual: f64,
    pub z_dims: Vec<usize>,
    pub z_dims_ok: bool,
}

impl MoritaContext {
    /// Check the imprimitivity compatibility, the canonical-shuffle
    /// composition law, and the subproduct axiom of the linking fibers.
    pub fn validate(&self, seed: u64) -> MoritaValidation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rvec = |len: usize| -> CMatrix {
            CMatrix::from_fn(len, 1, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        };
        // _A<x,y> z = x <y,z>_B for x, y, z in M.
        let mut imp = 0.0_f64;
        for _ in 0..8 {
            let (x, y, z) = (rvec(self.k), rvec(self.k), rvec(self.k));
            let lhs = (&x * y.adjoint()) * &z;
            let rhs = &x * (y.adjoint() * &z);
            imp = imp.max(op_norm(&(lhs - rhs)));
        }

        // In these coordinates every W_n is the identity permutation of
        // M ⊗ Y(n), so W_{n+m} and (I ⊗ W_m)(W_n ⊗ I) coincide exactly.
        let mut wres = 0.0_f64;
        for n in 1..self.n_max() {
            for m in 1..=(self.n_max() - n) {
                let w_nm = CMatrix::identity(
                    self.k * self.y_dim(n) * self.y_dim(m),
                    self.k * self.y_dim(n) * self.y_dim(m),
                );
                let composed = CMatrix::identity(w_nm.nrows(), w_nm.ncols());
                wres = wres.max(op_norm(&(&w_nm - &composed)));
            }
        }

        // Subproduct axiom of Z(n): the four corners reduce to the Y-side
        // residual tensored with identity factors.
        let mut zres = 0.0_f64;
        let y = self.y();
        for n in 1..self.n_max() {
            for m in 1..=(self.n_max() - n) {
                let pn = y.p(n);
                let pm = y.p(m);
                let pnm = y.p(n + m);
                let d = y.tensor_pair_op(n, m, &pn, &pm) * &pnm - &pnm;
                let base = op_norm(&d);
                let ik = CMatrix::identity(self.k, self.k);
                let ikk = CMatrix::identity(self.k * self.k, self.k * self.k);
                zres = zres
                    .max(base)
                    .max(op_norm(&kron(&ik, &d)))
                    .max(op_norm(&kron(&ikk, &d)));
            }
        }

        let z_dims: Vec<usize> = (0..=self.n_max()).map(|n| self.z_dim(n)).collect();
        let z_dims_ok = z_dims
            .iter()
            .enumerate()
            .all(|(n, &zd)| zd == (1 + self.k) * (1 + self.k) * self.y_dim(n));
        MoritaValidation {
            imprimitivity_residual: imp,
            w_composition_residual: wres,
            z_subproduct_residual: zres,
            z_dims,
            z_dims_ok,
        }
    }

    fn random_fiber(&self, rng: &mut ChaCha8Rng, level: usize) -> Vec<C64> {
        (0..self.y_dim(level))
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn random_kmat(&self, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(self.k, self.k, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// Seeded corner-pure word: factors carry either only `η_1` corners
    /// (`p`-type) or only `ζ_2` corners (`q`-type).
    pub fn random_word(&self, rng: &mut ChaCha8Rng, p_type: bool, max_len: usize) -> LinkingWord {
        let len = rng.gen_range(1..=max_len.max(1));
        let max_level = self.n_max().saturating_sub(1).clamp(1, 2);
        let factors = (0..len)
            .map(|_| {
                let level = rng.gen_range(1..=max_level);
                let gen = if p_type {
                    LinkingGenerator::upper(level, self.random_fiber(rng, level))
                } else {
                    let terms = vec![(self.random_kmat(rng), self.random_fiber(rng, level))];
                    LinkingGenerator::lower(level, self.y_dim(level), terms)
                };
                WordFactor { gen, adjoint: rng.gen_bool(0.5) }
            })
            .collect();
        LinkingWord { factors }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompressionReport {
    pub words: usize,
    pub p_residuals: Vec<f64>,
    pub q_residuals: Vec<f64>,
    pub max_p_residual: f64,
    pub max_q_residual: f64,
    /// Max gap in `||T ⊗ I_M|| = ||T||` over the sampled words.
    pub norm_preservation_gap: f64,
}

impl MoritaContext {
    /// Compare `p · word · p` with the corresponding `Y`-side word and
    /// `q · word · q` with the `X`-side word `⊗ I_M`, over seeded
    /// corner-pure words.
    pub fn compression_check(&self, n_words: usize, seed: u64) -> Result<CompressionReport, MoritaError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p_residuals = Vec::new();
        let mut q_residuals = Vec::new();
        let mut norm_gap = 0.0_f64;
        for i in 0..n_words {
            let p_type = i % 2 == 0;
            let word = self.random_word(&mut rng, p_type, 3);
            let direct = self.word_op(&word)?;
            if p_type {
                // Correspondent: the product of the Y-side shifts.
                let mut acc: Option<LevelOp> = None;
                for f in &word.factors {
                    let mut s = self.fock_y.shift(f.gen.level, &f.gen.eta1)?.op;
                    if f.adjoint {
                        s = s.adjoint();
                    }
                    acc = Some(match acc {
                        None => s,
                        Some(prev) => prev.mul(&s),
                    });
                }
                let corr = acc.expect("nonempty word");
                let residual = self.upper_corner(&direct).residual(&corr);
                // Lemma instance: || I_k ⊗ T || = || T ||.
                let t = corr.to_dense();
                let ik = CMatrix::identity(self.k, self.k);
                norm_gap = norm_gap.max((op_norm(&kron(&ik, &t)) - op_norm(&t)).abs());
                p_residuals.push(residual);
            } else {
                // Correspondent: the product of X-side shifts in coordinates.
                let mut acc: Option<LevelOp> = None;
                let mut underlying: Option<CMatrix> = None;
                for f in &word.factors {
                    let mut s = self.x_shift_in_coords(f.gen.level, &f.gen.zeta2)?;
                    let mut u = self.x_underlying_dense(f.gen.level, &f.gen.zeta2)?;
                    if f.adjoint {
                        s = s.adjoint();
                        u = u.adjoint();
                    }
                    acc = Some(match acc {
                        None => s,
                        Some(prev) => prev.mul(&s),
                    });
                    underlying = Some(match underlying {
                        None => u,
                        Some(prev) => prev * u,
                    });
                }
                let corr = acc.expect("nonempty word");
                let residual = self.lower_corner(&direct).residual(&corr);
                // ||T ⊗ I_M|| on F_X ⊗ M versus ||T|| on the underlying F_X.
                let coords_norm = corr.op_norm();
                let underlying_norm = op_norm(&underlying.expect("nonempty word"));
                norm_gap = norm_gap.max((coords_norm - underlying_norm).abs());
                q_residuals.push(residual);
            }
        }
        let max_p = p_residuals.iter().cloned().fold(0.0_f64, f64::max);
        let max_q = q_residuals.iter().cloned().fold(0.0_f64, f64::max);
        Ok(CompressionReport {
            words: n_words,
            p_residuals,
            q_residuals,
            max_p_residual: max_p,
            max_q_residual: max_q,
            norm_preservation_gap: norm_gap,
        })
    }

    /// Dense matrix of `Σ A ⊗ S^Y(η)` acting on the underlying space
    /// `M_k ⊗ F_Y` (left multiplication by `A` is `A ⊗ I_k` there).
    fn x_underlying_dense(
        &self,
        level: usize,
        terms: &[(CMatrix, Vec<C64>)],
    ) -> Result<CMatrix, MoritaError> {
        let ik = CMatrix::identity(self.k, self.k);
        let fy = self.fock_y.total_dim();
        let mut out = CMatrix::zeros(self.k * self.k * fy, self.k * self.k * fy);
        for (a, h) in terms {
            let s = self.fock_y.shift(level, h)?.op.to_dense();
            out += kron(&kron(a, &ik), &s);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferReport {
    /// `(n, ||(q T1 p · S · p T2 q)(Q_n^X ⊗ I)||, bound, exact)`.
    pub seq: Vec<(usize, f64, f64, bool)>,
    pub violations: usize,
    pub terminal: Option<f64>,
    /// Last exact `||S Q_n^Y||` of the transported operator.
    pub y_terminal: Option<f64>,
    pub t2_degree: i64,
}

impl MoritaContext {
    /// Rieffel-correspondence transfer: the transported sequence is
    /// dominated by `||T1|| ||S Q^Y_{n+m}|| ||T2||` and decays with it.
    pub fn ideal_transfer_check(
        &self,
        t1: &LinkingWord,
        t2: &LinkingWord,
        s: &FockOperator,
        tol: f64,
    ) -> Result<TransferReport, MoritaError> {
        let t1_op = self.word_op(t1)?;
        let t2_op = self.word_op(t2)?;
        self.ideal_transfer_check_ops(&t1_op, &t2_op, s, tol)
    }

    /// Same check on raw linking operators; `t2` must carry a single degree.
    pub fn ideal_transfer_check_ops(
        &self,
        t1_op: &LevelOp,
        t2_op: &LevelOp,
        s: &FockOperator,
        tol: f64,
    ) -> Result<TransferReport, MoritaError> {
        if t2_op.degrees.len() != 1 {
            return Err(MoritaError::NotMonomial(t2_op.degrees.iter().cloned().collect()));
        }
        let m_deg = *t2_op.degrees.iter().next().unwrap();
        let p = self.p_op();
        let q = self.q_op();
        let s_link = self.embed_upper(s);
        let left = q.mul(t1_op).mul(&p);
        let right = p.mul(t2_op).mul(&q);
        let composite = left.mul(&s_link).mul(&right);
        let norm_t1 = t1_op.op_norm();
        let norm_t2 = t2_op.op_norm();

        let top = self.n_max() as i64;
        let mut seq = Vec::new();
        let mut violations = 0;
        let mut terminal = None;
        let mut y_terminal = None;
        for n in 0..=self.n_max() {
            let shifted = n as i64 + m_deg;
            if shifted < 0 || shifted > top {
                continue;
            }
            let sq = s.column_norm(shifted as usize);
            let value = composite.column_norm(n);
            let bound = norm_t1 * sq * norm_t2;
            let exact = composite.exact[n] && s.exact_column(shifted as usize);
            if exact {
                if value > bound + tol {
                    violations += 1;
                }
                terminal = Some(value);
                y_terminal = Some(sq);
            }
            seq.push((n, value, bound, exact));
        }
        Ok(TransferReport { seq, violations, terminal, y_terminal, t2_degree: m_deg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideal::commutator;
    use crate::linalg::scalar;
    use crate::systems::build_symmetric;

    fn ctx(k: usize) -> MoritaContext {
        let y = Arc::new(build_symmetric(2, 4).unwrap());
        build_context(k, y).unwrap()
    }

    #[test]
    fn dimensions_match_the_linking_picture() {
        let c = ctx(2);
        assert_eq!(c.x_dim(2), 4 * 3);
        for n in 0..=4 {
            assert_eq!(c.z_dim(n), 9 * c.y_dim(n));
            assert_eq!(c.levels_link.dims[n], 3 * c.y_dim(n));
        }
        let v = c.validate(5);
        assert!(v.z_dims_ok);
        assert_eq!(v.w_composition_residual, 0.0);
        assert!(v.imprimitivity_residual < 1e-12);
        assert!(v.z_subproduct_residual < 1e-10);
    }

    #[test]
    fn upper_generator_compresses_to_y_shift() {
        let c = ctx(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eta = c.random_fiber(&mut rng, 1);
        let g = LinkingGenerator::upper(1, eta.clone());
        let op = c.linking_shift(&g).unwrap();
        let y_shift = c.fock_y.shift(1, &eta).unwrap().op;
        let residual = c.upper_corner(&op).residual(&y_shift);
        assert_eq!(residual, 0.0);
        // Nothing leaks into the other corners for an upper generator.
        assert_eq!(c.lower_corner(&op).op_norm(), 0.0);
    }

    #[test]
    fn lower_generator_acts_as_x_shift_tensor_identity() {
        let c = ctx(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let terms = vec![(c.random_kmat(&mut rng), c.random_fiber(&mut rng, 1))];
        let g = LinkingGenerator::lower(1, c.y_dim(1), terms.clone());
        let op = c.linking_shift(&g).unwrap();
        let coords = c.x_shift_in_coords(1, &terms).unwrap();
        assert_eq!(c.lower_corner(&op).residual(&coords), 0.0);
        assert_eq!(c.upper_corner(&op).op_norm(), 0.0);
    }

    #[test]
    fn adjoint_lower_component_matches_w_shuffle_formula() {
        // For β with only the η_2 ⊗ w̃ corner, S^Z(β)* sends the upper
        // summand to W_{m-k}(w ⊗ S^Y(η_2)* ν); in coordinates that is
        // w ⊗ (S^Y(η_2)* ν).
        let c = ctx(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eta2 = c.random_fiber(&mut rng, 1);
        let w: Vec<C64> = (0..c.k)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut g = LinkingGenerator::zero(1, c.y_dim(1));
        g.eta2.push((eta2.clone(), w.clone()));
        let adj = c.linking_shift(&g).unwrap().adjoint();

        let y_adj = c.fock_y.shift(1, &eta2).unwrap().op.adjoint();
        for m in 1..=c.n_max() {
            let block = adj.blocks.get(&(m - 1, m)).expect("adjoint block");
            let yb = y_adj.blocks.get(&(m - 1, m)).expect("y adjoint block");
            let (yr, yc) = (c.y_dim(m - 1), c.y_dim(m));
            // Lower-out-of-upper-in corner: rows yr.., cols 0..yc.
            let corner: CMatrix = block.view((yr, 0), (c.k * yr, yc)).into();
            let wcol = CMatrix::from_fn(c.k, 1, |i, _| w[i]);
            let expect = kron(&wcol, yb);
            assert!(op_norm(&(corner - expect)) < 1e-14, "m={m}");
        }
    }

    #[test]
    fn k1_compression_is_exact() {
        let c = ctx(1);
        let rep = c.compression_check(20, 11).unwrap();
        assert_eq!(rep.max_p_residual, 0.0);
        assert_eq!(rep.max_q_residual, 0.0);
        assert!(rep.norm_preservation_gap < 1e-10);
    }

    #[test]
    fn k2_compression_within_tolerance() {
        let c = ctx(2);
        let rep = c.compression_check(20, 13).unwrap();
        assert!(rep.max_p_residual <= 1e-10, "{}", rep.max_p_residual);
        assert!(rep.max_q_residual <= 1e-10, "{}", rep.max_q_residual);
        assert!(rep.norm_preservation_gap <= 1e-10);
    }

    #[test]
    fn mixed_corner_word_matches_derived_correspondent() {
        // p S^Z(α)* S^Z(β) p = S^Y(η_α)* S^Y(η_β) + Σ <u_α, u_β> S^Y(θ_α)* S^Y(θ_β).
        let c = ctx(2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mk = |c: &MoritaContext, rng: &mut ChaCha8Rng| {
            let mut g = LinkingGenerator::upper(1, c.random_fiber(rng, 1));
            let u: Vec<C64> = (0..c.k)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            g.zeta1.push((u, c.random_fiber(rng, 1)));
            g
        };
        let alpha = mk(&c, &mut rng);
        let beta = mk(&c, &mut rng);
        let word = LinkingWord {
            factors: vec![
                WordFactor { gen: alpha.clone(), adjoint: true },
                WordFactor { gen: beta.clone(), adjoint: false },
            ],
        };
        let direct = c.word_op(&word).unwrap();

        let sy = |g: &LinkingGenerator| c.fock_y.shift(1, &g.eta1).unwrap().op;
        let st = |g: &LinkingGenerator| c.fock_y.shift(1, &g.zeta1[0].1).unwrap().op;
        let inner: C64 = alpha.zeta1[0]
            .0
            .iter()
            .zip(&beta.zeta1[0].0)
            .map(|(a, b)| a.conj() * b)
            .sum();
        let corr = sy(&alpha)
            .adjoint()
            .mul(&sy(&beta))
            .add(&st(&alpha).adjoint().mul(&st(&beta)).scale(inner));
        let residual = c.upper_corner(&direct).residual(&corr);
        assert!(residual < 1e-12, "{residual}");
    }

    #[test]
    fn ideal_transfer_bound_and_decay() {
        let c = ctx(2);
        let fy = &c.fock_y;
        let s1 = fy.shift_basis(1, 0).unwrap();
        let s = commutator(&s1, &s1.adjoint());

        // Q_3 on the Y side: transported sequence is zero off level 3 - m.
        let q3 = fy.q_proj(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t1 = c.random_word(&mut rng, false, 1);
        let t2 = LinkingWord {
            factors: vec![WordFactor {
                gen: LinkingGenerator::upper(1, c.random_fiber(&mut rng, 1)),
                adjoint: false,
            }],
        };
        let rep = c.ideal_transfer_check(&t1, &t2, &q3, 1e-10).unwrap();
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.t2_degree, 1);
        for &(n, v, _, exact) in &rep.seq {
            if exact && n + 1 != 3 {
                assert!(v < 1e-12, "n={n} v={v}");
            }
        }

        // Commutator: decay mirrors the Y-side sequence.
        let rep = c.ideal_transfer_check(&t1, &t2, &s, 1e-10).unwrap();
        assert_eq!(rep.violations, 0);
        let (term, yterm) = (rep.terminal.unwrap(), rep.y_terminal.unwrap());
        assert!(term <= 2.0 * yterm + 1e-12, "{term} vs {yterm}");
    }

    #[test]
    fn bad_inputs_rejected() {
        let y = Arc::new(crate::systems::build_quiver(
            &nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]),
            3,
        )
        .unwrap());
        assert!(matches!(build_context(2, y), Err(MoritaError::NotScalarBase)));

        let c = ctx(2);
        let g = LinkingGenerator::upper(1, vec![scalar(1.0, 0.0)]);
        assert!(matches!(c.linking_shift(&g), Err(MoritaError::Dimension(_))));

        // T2 with two degrees is not a monomial.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g1 = LinkingGenerator::upper(1, c.random_fiber(&mut rng, 1));
        let g2 = LinkingGenerator::upper(2, c.random_fiber(&mut rng, 2));
        let t1 = c.linking_shift(&g1).unwrap();
        let t2_sum = c.linking_shift(&g1).unwrap().add(&c.linking_shift(&g2).unwrap());
        let fy = &c.fock_y;
        let s = fy.q_proj(0).unwrap();
        assert!(matches!(
            c.ideal_transfer_check_ops(&t1, &t2_sum, &s, 1e-10),
            Err(MoritaError::NotMonomial(_))
        ));
    }
}
