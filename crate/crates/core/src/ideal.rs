//! Diagnostics for the Cuntz-Pimsner ideal `{S : ||S Q_n|| -> 0}`.
//!
//! Limits are not decidable at a finite truncation, so verdicts certify
//! decay (or a plateau) over the exact part of the norm sequence and always
//! carry the evidence.

use serde::Serialize;
use thiserror::Error;

use crate::fock::{Fock, FockOperator};
use crate::linalg::C64;
use crate::systems::Family;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default threshold below which a norm counts as numerically zero.
pub const TOL_IDEAL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IdealError {
    #[error("no exact columns available at truncation {n_max}; rebuild the system with a larger N")]
    NoExactColumns { n_max: usize },
    #[error("scan horizon {requested} exceeds the truncation level {n_max}")]
    HorizonTooLarge { requested: usize, n_max: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    InIdeal,
    NotInIdeal,
    Inconclusive,
}

/// Norm decay evidence for one operator.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    /// `(n, ||S Q_n||, exact)` for `n <= n_max`.
    pub norms: Vec<(usize, f64, bool)>,
    /// `(n, ||S R_n'||, exact)`; the tail flag requires every column from
    /// `n` up to the truncation to be exact.
    pub tails: Vec<(usize, f64, bool)>,
    pub verdict: Verdict,
    /// Fitted power-law exponent of the last exact window, when positive
    /// values allow a fit.
    pub rate: Option<f64>,
}

fn fit_rate(points: &[(usize, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(n, v)| n >= 1 && v > 0.0)
        .map(|&(n, v)| ((n as f64).ln(), v.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|p| p.0).sum();
    let sy: f64 = usable.iter().map(|p| p.1).sum();
    let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    Some(-(n * sxy - sx * sy) / denom)
}

/// Scan `||S Q_n||` and `||S R_n'||` for `n <= n_max` and classify.
pub fn decay_scan(s: &FockOperator, n_max: usize, tol_ideal: f64) -> Result<DecayReport, IdealError> {
    let top = s.fock.n_max();
    if n_max > top {
        return Err(IdealError::HorizonTooLarge { requested: n_max, n_max: top });
    }
    if s.op.last_exact().is_none() {
        return Err(IdealError::NoExactColumns { n_max: top });
    }
    let norms: Vec<(usize, f64, bool)> = (0..=n_max)
        .map(|n| (n, s.column_norm(n), s.exact_column(n)))
        .collect();
    let tails: Vec<(usize, f64, bool)> = (0..=n_max)
        .map(|n| {
            let exact = (n..=top).all(|m| s.exact_column(m));
            (n, s.tail_norm(n), exact)
        })
        .collect();

    let exact_pts: Vec<(usize, f64)> = norms
        .iter()
        .filter(|&&(_, _, e)| e)
        .map(|&(n, v, _)| (n, v))
        .collect();
    let verdict = classify_sequence(&exact_pts, tol_ideal);
    let window = &exact_pts[exact_pts.len().saturating_sub(4)..];
    let rate = fit_rate(window);
    Ok(DecayReport { norms, tails, verdict, rate })
}

fn classify_sequence(exact: &[(usize, f64)], tol_ideal: f64) -> Verdict {
    let Some(&(_, last)) = exact.last() else {
        return Verdict::Inconclusive;
    };
    if last <= tol_ideal {
        return Verdict::InIdeal;
    }
    if exact.len() >= 4 {
        let window = &exact[exact.len() - 4..];
        if window.windows(2).all(|w| w[1].1 < w[0].1) {
            return Verdict::InIdeal;
        }
        let mean: f64 = window.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let spread = window
            .iter()
            .map(|p| (p.1 - mean).abs())
            .fold(0.0_f64, f64::max);
        if window.iter().all(|p| p.1 >= 10.0 * tol_ideal) && spread <= 0.1 * mean {
            return Verdict::NotInIdeal;
        }
    }
    Verdict::Inconclusive
}

/// Which expression of `R_n'` in shift operators certifies `Q_n ∈ T(X)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    HilbertFibers,
    QuiverReconstruction,
}

pub fn witness_for(fock: &Fock) -> Witness {
    match fock.system.family {
        Family::Quiver => Witness::QuiverReconstruction,
        _ => Witness::HilbertFibers,
    }
}

/// `Σ_κ S_n(e_κ) S_n(e_κ)*` over the fiber basis, which must reconstruct
/// `R_n'` on the truncation.
pub fn reconstruct_rp(fock: &Fock, n: usize) -> Result<FockOperator, crate::fock::FockError> {
    let mut acc = fock.zero_op();
    for kappa in 0..fock.system.fiber_dim(n) {
        let s = fock.shift_basis(n, kappa)?;
        acc = &acc + &(&s * &s.adjoint());
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize)]
pub struct QnIdealReport {
    pub witness: Witness,
    /// `(n, ||Σ_κ S_n(e_κ)S_n(e_κ)* - R_n'||)`.
    pub reconstruction: Vec<(usize, f64)>,
    /// For each sample: `(m, ||S - S R_m||, exact)`.
    pub approximations: Vec<Vec<(usize, f64, bool)>>,
}

/// Verify that in-ideal samples are approximable by the ideal generated by
/// the level projections: `||S - S R_m|| = ||S R_{m+1}'|| -> 0`.
pub fn generated_by_qn_check(
    fock: &Fock,
    samples: &[FockOperator],
) -> Result<QnIdealReport, crate::fock::FockError> {
    let top = fock.n_max();
    let mut reconstruction = Vec::new();
    for n in 1..=top {
        let rec = reconstruct_rp(fock, n)?;
        let rp = fock.rp_proj(n)?;
        reconstruction.push((n, rec.residual(&rp)));
    }
    let approximations = samples
        .iter()
        .map(|s| {
            (0..top)
                .map(|m| {
                    let exact = (m + 1..=top).all(|c| s.exact_column(c));
                    (m, s.tail_norm(m + 1), exact)
                })
                .collect()
        })
        .collect();
    Ok(QnIdealReport { witness: witness_for(fock), reconstruction, approximations })
}

/// Upper-bound estimator of the quotient norm `||S + I||`.
#[derive(Clone, Debug, Serialize)]
pub struct CpEstimate {
    pub value: f64,
    pub n_star: usize,
    /// Monotone certificate `(n, ||S R_n'||, exact)` for `n <= n_star`.
    pub tails: Vec<(usize, f64, bool)>,
}

/// `||S R_{n*}'||` at the largest exact column `n*`.
pub fn cp_seminorm(s: &FockOperator) -> Result<CpEstimate, IdealError> {
    let top = s.fock.n_max();
    let Some(n_star) = s.op.last_exact() else {
        return Err(IdealError::NoExactColumns { n_max: top });
    };
    let tails = (0..=n_star)
        .map(|n| {
            let exact = (n..=top).all(|m| s.exact_column(m));
            (n, s.tail_norm(n), exact)
        })
        .collect::<Vec<_>>();
    Ok(CpEstimate { value: tails[n_star].1, n_star, tails })
}

/// The operator `f(S) = Σ_i α_i S_1(e_i) S_1(e_i)* + γ I` on a `q = 1`
/// system, together with its boundary symbol `Σ_i α_i |z_i|^2 + γ`.
pub fn symbol_operator(
    fock: &Fock,
    alphas: &[f64],
    gamma: f64,
) -> Result<FockOperator, crate::fock::FockError> {
    let mut acc = fock.identity_op().scale(C64::new(gamma, 0.0));
    for (i, &a) in alphas.iter().enumerate() {
        let s = fock.shift_basis(1, i)?;
        acc = &acc + &(&s * &s.adjoint()).scale(C64::new(a, 0.0));
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize)]
pub struct SphereReport {
    pub estimate: CpEstimate,
    pub sphere_sup: f64,
    pub gap: f64,
    pub grid_points: usize,
    pub random_points: usize,
}

/// Points of the unit sphere of `C^d` as squared-modulus vectors: a
/// golden-ratio lattice over the simplex, the simplex vertices, and seeded
/// pseudorandom points.
pub fn sphere_modulus_samples(d: usize, grid: usize, random: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(grid + random + d);
    for i in 0..d {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        out.push(v);
    }
    // Kronecker lattice on the cube, mapped to the simplex via spacings.
    let irr: Vec<f64> = (0..d - 1)
        .map(|k| (2.0 + k as f64).sqrt().fract())
        .collect();
    for j in 0..grid {
        let mut cuts: Vec<f64> = irr
            .iter()
            .map(|&g| ((j as f64 + 0.5) * g).fract())
            .collect();
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let v: Vec<f64> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
        out.push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let mut v: Vec<f64> = (0..d)
            .map(|_| {
                let (re, im): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                re * re + im * im
            })
            .collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            v.iter_mut().for_each(|x| *x /= total);
            out.push(v);
        }
    }
    out
}

/// Compare the quotient-norm estimator of `f(S)` against the boundary-sphere
/// sup of its symbol.
pub fn sphere_compare(
    fock: &Fock,
    alphas: &[f64],
    gamma: f64,
    grid: usize,
    random: usize,
    seed: u64,
) -> Result<SphereReport, IdealError> {
    let d = alphas.len();
    assert_eq!(fock.system.q, 1, "sphere comparison needs a scalar base");
    assert_eq!(d, fock.system.fiber_dim(1), "one coefficient per letter");
    let f = symbol_operator(fock, alphas, gamma).expect("levels in range");
    let estimate = cp_seminorm(&f)?;
    let sup = sphere_modulus_samples(d, grid, random, seed)
        .iter()
        .map(|s| {
            let val: f64 = s.iter().zip(alphas).map(|(si, ai)| si * ai).sum::<f64>() + gamma;
            val.abs()
        })
        .fold(0.0_f64, f64::max);
    let gap = (estimate.value - sup).abs();
    Ok(SphereReport {
        estimate,
        sphere_sup: sup,
        gap,
        grid_points: grid,
        random_points: random,
    })
}

pub fn commutator(a: &FockOperator, b: &FockOperator) -> FockOperator {
    &(a * b) - &(b * a)
}
