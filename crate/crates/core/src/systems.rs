//! Subproduct systems over `C^q`: data model, the four builder families
//! (product, symmetric, subshift, positive-matrix quiver) and structural
//! validation of the subproduct axiom.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graded::{tensor, BasisVector, GradedCorrespondence};
use crate::linalg::{identity, op_norm, orthonormal_range, C64, CMatrix, RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Product,
    Symmetric,
    Subshift,
    Quiver,
    Induced,
}

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("language dies at level {level}: no allowed word of that length, the system would be non-faithful")]
    EmptyLanguage { level: usize },
    #[error("column {column} of P is zero: the left action of vertex unit {column} vanishes")]
    NonFaithful { column: usize },
}

/// A word in the edge basis of `E`, anchored at its left vertex so that the
/// empty word still knows where it lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Word {
    pub anchor: usize,
    pub letters: Vec<u16>,
    pub right: usize,
}

/// One tensor power `E^{⊗n}` with its word basis in lexicographic order.
#[derive(Clone, Debug)]
pub struct TensorLevel {
    pub space: GradedCorrespondence,
    pub words: Vec<Word>,
    index: HashMap<Vec<u16>, usize>,
}

impl TensorLevel {
    fn new(space: GradedCorrespondence, words: Vec<Word>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.letters.clone(), i))
            .collect();
        TensorLevel { space, words, index }
    }

    pub fn dim(&self) -> usize {
        self.words.len()
    }

    fn index_of(&self, anchor: usize, letters: &[u16]) -> usize {
        if letters.is_empty() {
            anchor
        } else {
            self.index[letters]
        }
    }
}

/// Combinatorial data of a positive-matrix quiver system.
#[derive(Clone, Debug)]
pub struct QuiverData {
    pub p: DMatrix<f64>,
    /// `P^n` for `n = 0..=N`.
    pub powers: Vec<DMatrix<f64>>,
    /// Boolean supports of `P^n`, computed by boolean matrix powers.
    pub support: Vec<Vec<Vec<bool>>>,
}

impl QuiverData {
    pub fn d(&self) -> usize {
        self.p.nrows()
    }

    /// Number of supported entries of `P^n`.
    pub fn support_count(&self, n: usize) -> usize {
        self.support[n].iter().flatten().filter(|&&b| b).count()
    }
}

/// A truncated subproduct system: fibers `X(n)` with isometric embeddings
/// `J_n : X(n) -> E^{⊗n}` for `n <= N`.
#[derive(Clone, Debug)]
pub struct SubproductSystem {
    pub q: usize,
    pub n_max: usize,
    pub family: Family,
    pub e: GradedCorrespondence,
    pub tensors: Vec<TensorLevel>,
    pub fibers: Vec<GradedCorrespondence>,
    pub j: Vec<CMatrix>,
    pub quiver: Option<QuiverData>,
}

impl SubproductSystem {
    pub fn fiber_dims(&self) -> Vec<usize> {
        self.fibers.iter().map(|f| f.dim()).collect()
    }

    pub fn fiber_dim(&self, n: usize) -> usize {
        self.fibers[n].dim()
    }

    /// Orthogonal projection `p_n = J_n J_n*` of `E^{⊗n}` onto `X(n)`.
    pub fn p(&self, n: usize) -> CMatrix {
        &self.j[n] * self.j[n].adjoint()
    }

    /// Expand fiber coefficients into `E^{⊗n}` coordinates.
    pub fn embed(&self, n: usize, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.fiber_dim(n));
        let v = nalgebra::DVector::from_column_slice(coeffs);
        (&self.j[n] * v).iter().cloned().collect()
    }

    /// Split a level-`(n+m)` word index into its level-`n` and level-`m`
    /// word indices.
    pub fn split_index(&self, n: usize, m: usize, idx: usize) -> (usize, usize) {
        let w = &self.tensors[n + m].words[idx];
        let prefix = &w.letters[..n];
        let suffix = &w.letters[n..];
        let mid = if n == 0 {
            w.anchor
        } else {
            self.e.basis[prefix[n - 1] as usize].right
        };
        let i = self.tensors[n].index_of(w.anchor, prefix);
        let j = self.tensors[m].index_of(mid, suffix);
        (i, j)
    }

    /// The balanced tensor-product operator `a ⊗ b` of maps on `E^{⊗n}` and
    /// `E^{⊗m}`, expressed on the word basis of `E^{⊗(n+m)}`.
    pub fn tensor_pair_op(&self, n: usize, m: usize, a: &CMatrix, b: &CMatrix) -> CMatrix {
        let dim = self.tensors[n + m].dim();
        let splits: Vec<(usize, usize)> = (0..dim).map(|w| self.split_index(n, m, w)).collect();
        CMatrix::from_fn(dim, dim, |wp, w| {
            a[(splits[wp].0, splits[w].0)] * b[(splits[wp].1, splits[w].1)]
        })
    }

    /// Residual of the subproduct axiom at `(n, m)`:
    /// `||(p_n ⊗ p_m) p_{n+m} - p_{n+m}||`.
    pub fn subproduct_residual(&self, n: usize, m: usize) -> f64 {
        let pn = self.p(n);
        let pm = self.p(m);
        let pnm = self.p(n + m);
        let lhs = self.tensor_pair_op(n, m, &pn, &pm) * &pnm;
        op_norm(&(lhs - pnm))
    }

    pub fn validate(&self, tol: f64) -> ValidationReport {
        let mut max_sub = 0.0_f64;
        let mut worst_pair = None;
        for n in 1..=self.n_max {
            for m in 1..=(self.n_max - n) {
                let r = self.subproduct_residual(n, m);
                if r > max_sub {
                    max_sub = r;
                    worst_pair = Some((n, m));
                }
            }
        }
        let mut max_iso = 0.0_f64;
        let mut worst_level = None;
        for n in 1..=self.n_max {
            let g = self.j[n].adjoint() * &self.j[n];
            let r = op_norm(&(g - identity(self.fiber_dim(n))));
            if r > max_iso {
                max_iso = r;
                worst_level = Some(n);
            }
        }
        let faithful = (1..=self.n_max).all(|n| {
            (0..self.q).all(|a| self.fibers[n].basis.iter().any(|b| b.left == a))
        });
        ValidationReport {
            max_subproduct_residual: max_sub,
            worst_pair,
            max_isometry_residual: max_iso,
            worst_level,
            faithful,
            tol,
        }
    }

    /// Replace `J_n`, keeping everything else; used to exercise validation
    /// failure paths.
    pub fn with_replaced_embedding(&self, n: usize, j: CMatrix) -> Result<Self, SystemError> {
        if n == 0 || n > self.n_max {
            return Err(SystemError::BadParameter(format!("level {n} out of range")));
        }
        if j.nrows() != self.tensors[n].dim() {
            return Err(SystemError::BadParameter(
                "embedding has wrong ambient dimension".into(),
            ));
        }
        let mut out = self.clone();
        if j.ncols() != out.fibers[n].dim() {
            let labels: Vec<BasisVector> = (0..j.ncols())
                .map(|i| BasisVector {
                    label: format!("x{}", i + 1),
                    left: 0,
                    right: 0,
                })
                .collect();
            out.fibers[n] = GradedCorrespondence::new(self.q, labels);
        }
        out.j[n] = j;
        Ok(out)
    }

    /// Re-choose the orthonormal basis of `X(n)` by a unitary `u`
    /// (`J_n -> J_n u`). All reported operator norms must be unchanged.
    pub fn with_rotated_fiber(&self, n: usize, u: &CMatrix) -> Self {
        assert_eq!(u.nrows(), self.fiber_dim(n));
        assert_eq!(u.ncols(), self.fiber_dim(n));
        let mut out = self.clone();
        out.j[n] = &self.j[n] * u;
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub max_subproduct_residual: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub max_isometry_residual: f64,
    pub worst_level: Option<usize>,
    pub faithful: bool,
    pub tol: f64,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.faithful
            && self.max_subproduct_residual <= self.tol
            && self.max_isometry_residual <= self.tol
    }
}

fn check_params(d: usize, n_max: usize) -> Result<(), SystemError> {
    if d < 1 {
        return Err(SystemError::BadParameter("alphabet size must be >= 1".into()));
    }
    if n_max < 1 {
        return Err(SystemError::BadParameter("truncation level must be >= 1".into()));
    }
    if d > 9 {
        return Err(SystemError::BadParameter(
            "alphabet sizes above 9 are not supported by the label scheme".into(),
        ));
    }
    Ok(())
}

fn free_letter_space(d: usize) -> GradedCorrespondence {
    GradedCorrespondence::new(
        1,
        (1..=d)
            .map(|i| BasisVector { label: format!("{i}"), left: 0, right: 0 })
            .collect(),
    )
}

/// Word bases of `E^{⊗0..=N}` for a graded edge space.
fn build_tensor_levels(e: &GradedCorrespondence, n_max: usize, unit_labels: Vec<String>) -> Vec<TensorLevel> {
    let q = e.q;
    let mut levels = Vec::with_capacity(n_max + 1);
    let unit_space = GradedCorrespondence::units(q, unit_labels);
    let unit_words = (0..q)
        .map(|a| Word { anchor: a, letters: vec![], right: a })
        .collect();
    levels.push(TensorLevel::new(unit_space, unit_words));

    let level1_words: Vec<Word> = (0..e.dim())
        .map(|l| Word {
            anchor: e.basis[l].left,
            letters: vec![l as u16],
            right: e.basis[l].right,
        })
        .collect();
    levels.push(TensorLevel::new(e.clone(), level1_words));

    for n in 2..=n_max {
        let prev = &levels[n - 1];
        let ts = tensor(e, &prev.space);
        let words = ts
            .pairs
            .iter()
            .map(|&(l, w)| {
                let mut letters = vec![l as u16];
                letters.extend_from_slice(&prev.words[w].letters);
                Word {
                    anchor: e.basis[l].left,
                    letters,
                    right: prev.words[w].right,
                }
            })
            .collect();
        levels.push(TensorLevel::new(ts.space, words));
    }
    levels
}

/// Product system `X(n) = E^{⊗n}` over `C`.
pub fn build_product(d: usize, n_max: usize) -> Result<SubproductSystem, SystemError> {
    check_params(d, n_max)?;
    let e = free_letter_space(d);
    let tensors = build_tensor_levels(&e, n_max, vec!["1".into()]);
    let fibers: Vec<GradedCorrespondence> = tensors.iter().map(|t| t.space.clone()).collect();
    let j = tensors.iter().map(|t| identity(t.dim())).collect();
    Ok(SubproductSystem {
        q: 1,
        n_max,
        family: Family::Product,
        e,
        tensors,
        fibers,
        j,
        quiver: None,
    })
}

/// Symmetrizer `(1/n!) Σ_σ U_σ` on the word basis of `(C^d)^{⊗n}`,
/// assembled from the multiset closed form.
pub fn symmetrizer(d: usize, n: usize, level: &TensorLevel) -> CMatrix {
    let dim = level.dim();
    let mut classes: HashMap<Vec<u16>, Vec<usize>> = HashMap::new();
    for (i, w) in level.words.iter().enumerate() {
        let mut key = w.letters.clone();
        key.sort_unstable();
        classes.entry(key).or_default().push(i);
    }
    let n_fact: f64 = (1..=n).map(|k| k as f64).product();
    let mut s = CMatrix::zeros(dim, dim);
    for (key, members) in classes {
        let mut mult = vec![0usize; d];
        for &l in &key {
            mult[l as usize] += 1;
        }
        let stab: f64 = mult
            .iter()
            .map(|&m| (1..=m).map(|k| k as f64).product::<f64>())
            .product();
        let val = C64::new(stab / n_fact, 0.0);
        for &a in &members {
            for &b in &members {
                s[(a, b)] = val;
            }
        }
    }
    s
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Symmetric system `SSP_d`: `X(n)` is the symmetric subspace of `(C^d)^{⊗n}`.
pub fn build_symmetric(d: usize, n_max: usize) -> Result<SubproductSystem, SystemError> {
    check_params(d, n_max)?;
    let e = free_letter_space(d);
    let tensors = build_tensor_levels(&e, n_max, vec!["1".into()]);
    let mut fibers = vec![tensors[0].space.clone(), tensors[1].space.clone()];
    let mut j = vec![identity(1), identity(d)];
    for n in 2..=n_max {
        let sym = symmetrizer(d, n, &tensors[n]);
        let jn = orthonormal_range(&sym, RANK_TOL);
        let expected = binomial(n + d - 1, d - 1);
        assert_eq!(jn.ncols(), expected, "symmetric fiber rank mismatch at level {n}");
        fibers.push(GradedCorrespondence::new(
            1,
            (1..=expected)
                .map(|i| BasisVector { label: format!("h{i}"), left: 0, right: 0 })
                .collect(),
        ));
        j.push(jn);
    }
    Ok(SubproductSystem {
        q: 1,
        n_max,
        family: Family::Symmetric,
        e,
        tensors,
        fibers,
        j,
        quiver: None,
    })
}

fn parse_forbidden(d: usize, forbidden: &[String]) -> Result<Vec<Vec<u16>>, SystemError> {
    forbidden
        .iter()
        .map(|w| {
            if w.is_empty() {
                return Err(SystemError::BadParameter("forbidden word is empty".into()));
            }
            w.chars()
                .map(|c| {
                    let v = c
                        .to_digit(10)
                        .ok_or_else(|| SystemError::BadParameter(format!("bad letter '{c}'")))?;
                    if v < 1 || v as usize > d {
                        return Err(SystemError::BadParameter(format!(
                            "letter '{c}' outside alphabet 1..={d}"
                        )));
                    }
                    Ok((v - 1) as u16)
                })
                .collect()
        })
        .collect()
}

fn has_factor(word: &[u16], factor: &[u16]) -> bool {
    word.len() >= factor.len() && word.windows(factor.len()).any(|w| w == factor)
}

/// Subshift-of-finite-type system: `X(n)` is spanned by the length-`n` words
/// avoiding every forbidden factor.
pub fn build_subshift(
    d: usize,
    forbidden: &[String],
    n_max: usize,
) -> Result<SubproductSystem, SystemError> {
    check_params(d, n_max)?;
    let forbidden = parse_forbidden(d, forbidden)?;
    let e = free_letter_space(d);
    let tensors = build_tensor_levels(&e, n_max, vec!["1".into()]);
    let mut fibers = vec![tensors[0].space.clone()];
    let mut j = vec![identity(1)];
    for n in 1..=n_max {
        let allowed: Vec<usize> = (0..tensors[n].dim())
            .filter(|&i| {
                let w = &tensors[n].words[i].letters;
                !forbidden.iter().any(|f| has_factor(w, f))
            })
            .collect();
        if allowed.is_empty() {
            return Err(SystemError::EmptyLanguage { level: n });
        }
        let mut jn = CMatrix::zeros(tensors[n].dim(), allowed.len());
        let mut basis = Vec::with_capacity(allowed.len());
        for (col, &row) in allowed.iter().enumerate() {
            jn[(row, col)] = C64::new(1.0, 0.0);
            basis.push(tensors[n].space.basis[row].clone());
        }
        fibers.push(GradedCorrespondence::new(1, basis));
        j.push(jn);
    }
    Ok(SubproductSystem {
        q: 1,
        n_max,
        family: Family::Subshift,
        e,
        tensors,
        fibers,
        j,
        quiver: None,
    })
}

fn bool_mat_mul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let d = a.len();
    let mut out = vec![vec![false; d]; d];
    for i in 0..d {
        for k in 0..d {
            out[i][k] = (0..d).any(|t| a[i][t] && b[t][k]);
        }
    }
    out
}

/// Quiver system of a nonnegative matrix `P`: fibers indexed by the
/// supported entries of `P^n`, with path-weighted embeddings.
pub fn build_quiver(p: &DMatrix<f64>, n_max: usize) -> Result<SubproductSystem, SystemError> {
    let d = p.nrows();
    if d == 0 || p.ncols() != d {
        return Err(SystemError::BadParameter("P must be square and nonempty".into()));
    }
    check_params(d, n_max)?;
    for i in 0..d {
        for jj in 0..d {
            if p[(i, jj)] < 0.0 || !p[(i, jj)].is_finite() {
                return Err(SystemError::BadParameter(format!(
                    "P[{},{}] must be finite and nonnegative",
                    i + 1,
                    jj + 1
                )));
            }
        }
    }
    for col in 0..d {
        if !(0..d).any(|row| p[(row, col)] > 0.0) {
            return Err(SystemError::NonFaithful { column: col + 1 });
        }
    }

    let supp1: Vec<Vec<bool>> = (0..d)
        .map(|i| (0..d).map(|jj| p[(i, jj)] > 0.0).collect())
        .collect();
    let mut support = vec![vec![vec![false; d]; d]; 1];
    for i in 0..d {
        support[0][i][i] = true;
    }
    support.push(supp1.clone());
    for _ in 2..=n_max {
        let next = bool_mat_mul(support.last().unwrap(), &supp1);
        support.push(next);
    }
    let mut powers = vec![DMatrix::identity(d, d), p.clone()];
    for _ in 2..=n_max {
        let next = powers.last().unwrap() * p;
        powers.push(next);
    }

    // Edge f_ij exists iff P_{ji} > 0; it maps vertex j to vertex i.
    let mut edges = Vec::new();
    for i in 0..d {
        for jj in 0..d {
            if p[(jj, i)] > 0.0 {
                edges.push(BasisVector {
                    label: format!("f{}{}", i + 1, jj + 1),
                    left: i,
                    right: jj,
                });
            }
        }
    }
    let e = GradedCorrespondence::new(d, edges);
    let unit_labels = (1..=d).map(|a| format!("f{a}")).collect();
    let tensors = build_tensor_levels(&e, n_max, unit_labels);

    let mut fibers = vec![tensors[0].space.clone()];
    let mut j = vec![identity(d)];
    for n in 1..=n_max {
        let mut basis = Vec::new();
        let mut fiber_of_pair = HashMap::new();
        for i in 0..d {
            for jj in 0..d {
                if support[n][jj][i] {
                    fiber_of_pair.insert((i, jj), basis.len());
                    basis.push(BasisVector {
                        label: format!("f{}{}", i + 1, jj + 1),
                        left: i,
                        right: jj,
                    });
                }
            }
        }
        let mut jn = CMatrix::zeros(tensors[n].dim(), basis.len());
        for (row, w) in tensors[n].words.iter().enumerate() {
            let (i, jj) = (w.anchor, w.right);
            let col = fiber_of_pair[&(i, jj)];
            let mut weight = 1.0;
            for &l in &w.letters {
                let edge = &e.basis[l as usize];
                weight *= p[(edge.right, edge.left)];
            }
            let total = powers[n][(jj, i)];
            jn[(row, col)] = C64::new((weight / total).sqrt(), 0.0);
        }
        fibers.push(GradedCorrespondence::new(d, basis));
        j.push(jn);
    }
    Ok(SubproductSystem {
        q: d,
        n_max,
        family: Family::Quiver,
        e,
        tensors,
        fibers,
        j,
        quiver: Some(QuiverData { p: p.clone(), powers, support }),
    })
}

/// JSON description of a system, the schema consumed by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemDescription {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forbidden: Option<Vec<String>>,
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
}

impl SystemDescription {
    fn default_level(&self, d: usize) -> usize {
        if self.kind == "quiver" {
            6
        } else if d <= 2 {
            8
        } else {
            6
        }
    }

    pub fn build(&self) -> Result<SubproductSystem, SystemError> {
        match self.kind.as_str() {
            "product" | "symmetric" | "subshift" => {
                let d = self
                    .d
                    .ok_or_else(|| SystemError::BadParameter("field 'd' is required".into()))?;
                if self.p.is_some() {
                    return Err(SystemError::BadParameter(
                        "field 'P' only applies to quiver systems".into(),
                    ));
                }
                if self.forbidden.is_some() && self.kind != "subshift" {
                    return Err(SystemError::BadParameter(
                        "field 'forbidden' only applies to subshift systems".into(),
                    ));
                }
                let n = self.n.unwrap_or_else(|| self.default_level(d));
                match self.kind.as_str() {
                    "product" => build_product(d, n),
                    "symmetric" => build_symmetric(d, n),
                    _ => build_subshift(d, self.forbidden.as_deref().unwrap_or(&[]), n),
                }
            }
            "quiver" => {
                let rows = self
                    .p
                    .as_ref()
                    .ok_or_else(|| SystemError::BadParameter("field 'P' is required".into()))?;
                let d = rows.len();
                if rows.iter().any(|r| r.len() != d) {
                    return Err(SystemError::BadParameter("P must be square".into()));
                }
                if let Some(decl) = self.d {
                    if decl != d {
                        return Err(SystemError::BadParameter(
                            "field 'd' disagrees with the size of P".into(),
                        ));
                    }
                }
                if self.forbidden.is_some() {
                    return Err(SystemError::BadParameter(
                        "field 'forbidden' only applies to subshift systems".into(),
                    ));
                }
                let p = DMatrix::from_fn(d, d, |i, jj| rows[i][jj]);
                let n = self.n.unwrap_or_else(|| self.default_level(d));
                build_quiver(&p, n)
            }
            other => Err(SystemError::BadParameter(format!("unknown system kind '{other}'"))),
        }
    }
}
