//! Cross-module invariants: truncation-exactness soundness, basis
//! independence of reported norms, and property tests over the builders.

use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use splab_core::expr::{self, Expr};
use splab_core::fock::{Fock, FockOperator};
use splab_core::ideal::commutator;
use splab_core::linalg::{kron, op_norm, orthonormal_range, CMatrix, C64, RANK_TOL};
use splab_core::systems::{build_product, build_quiver, build_subshift, build_symmetric};

fn eval_on(fock: &Fock, text: &str) -> FockOperator {
    expr::eval_fock(&expr::parse(text).unwrap(), fock).unwrap()
}

/// Recomputing any exact column at truncation N+2 changes it by <= 1e-12.
#[test]
fn exact_columns_are_truncation_stable() {
    let texts = [
        "S1[e1]*S1[e2]~-S1[e2]~*S1[e1]",
        "S2[e1]~*S1[e2]*S1[e1]",
        "Rp2*S1[e1]+Q0",
        "S1[e1]*S1[e1]~*S1[e2]*S1[e2]~",
    ];
    let small = Fock::new(Arc::new(build_symmetric(2, 5).unwrap()));
    let big = Fock::new(Arc::new(build_symmetric(2, 7).unwrap()));
    for text in texts {
        let a = eval_on(&small, text);
        let b = eval_on(&big, text);
        for m in 0..=5usize {
            if !a.exact_column(m) {
                continue;
            }
            let ca = a.op.column_matrix(m);
            let cb = b.op.column_matrix(m);
            let diff = op_norm(&(cb.view((0, 0), (ca.nrows(), ca.ncols())).clone_owned() - &ca));
            let tail = op_norm(&cb.view((ca.nrows(), 0), (cb.nrows() - ca.nrows(), cb.ncols())).clone_owned());
            assert!(diff <= 1e-12, "{text} column {m}: interior drift {diff}");
            assert!(tail <= 1e-12, "{text} column {m}: mass above old truncation {tail}");
        }
    }
}

/// An isometric re-choice of a fiber basis must leave all reported norms
/// unchanged.
#[test]
fn reported_norms_are_basis_independent() {
    let base = Arc::new(build_symmetric(2, 6).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dim2 = base.fiber_dim(2);
    let random = CMatrix::from_fn(dim2, dim2, |_, _| {
        use rand::Rng;
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let u = orthonormal_range(&random, RANK_TOL);
    assert_eq!(u.ncols(), dim2);
    let rotated = Arc::new(base.with_rotated_fiber(2, &u));
    assert!(rotated.validate(1e-10).pass());

    let fa = Fock::new(base);
    let fb = Fock::new(rotated);
    for (a, b) in [
        (eval_on(&fa, "S1[e1]"), eval_on(&fb, "S1[e1]")),
        (
            eval_on(&fa, "S1[e1]*S1[e2]~-S1[e2]~*S1[e1]"),
            eval_on(&fb, "S1[e1]*S1[e2]~-S1[e2]~*S1[e1]"),
        ),
    ] {
        assert!((a.op_norm() - b.op_norm()).abs() < 1e-10);
        for n in 0..=6usize {
            assert!((a.column_norm(n) - b.column_norm(n)).abs() < 1e-10, "level {n}");
        }
    }
}

/// Commutators stay in the ideal after left/right multiplication by
/// monomials, witnessed by the dominated column norms.
#[test]
fn right_ideal_estimate_holds() {
    let fock = Fock::new(Arc::new(build_symmetric(2, 8).unwrap()));
    let c = commutator(
        &fock.shift_basis(1, 0).unwrap(),
        &fock.shift_basis(1, 1).unwrap().adjoint(),
    );
    let t = fock.shift_basis(1, 0).unwrap(); // degree 1 monomial
    let ct = &c * &t;
    let t_norm = t.op_norm();
    for n in 0..=6usize {
        if ct.exact_column(n) {
            assert!(ct.column_norm(n) <= c.column_norm(n + 1) * t_norm + 1e-12);
        }
    }
}

/// Expression evaluation agrees with composing module calls directly.
#[test]
fn expression_eval_agrees_with_module_calls() {
    fn direct(fock: &Fock, e: &Expr) -> FockOperator {
        match e {
            Expr::Identity => fock.identity_op(),
            Expr::Scalar(c) => fock.identity_op().scale(*c),
            Expr::Gen { level, fiber } => {
                let idx = expr::resolve_fiber(&fock.system, *level, fiber).unwrap();
                fock.shift_basis(*level, idx).unwrap()
            }
            Expr::Proj { kind, level } => match kind {
                expr::ProjKind::Q => fock.q_proj(*level).unwrap(),
                expr::ProjKind::R => fock.r_proj(*level).unwrap(),
                expr::ProjKind::Rp => fock.rp_proj(*level).unwrap(),
            },
            Expr::Adj(x) => direct(fock, x).adjoint(),
            Expr::Add(a, b) => &direct(fock, a) + &direct(fock, b),
            Expr::Sub(a, b) => &direct(fock, a) - &direct(fock, b),
            Expr::Mul(a, b) => &direct(fock, a) * &direct(fock, b),
        }
    }

    let sys = Arc::new(build_symmetric(2, 5).unwrap());
    let fock = Fock::new(sys.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let e = expr::random_expr(&mut rng, &sys, 3);
        let via_eval = expr::eval_fock(&e, &fock).unwrap();
        let via_direct = direct(&fock, &e);
        assert_eq!(via_eval.residual(&via_direct), 0.0, "{}", expr::print(&e));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Subproduct axiom across the builder families.
    #[test]
    fn builders_satisfy_subproduct_axiom(d in 1usize..=3, n in 2usize..=4, which in 0usize..3) {
        let sys = match which {
            0 => build_product(d, n).unwrap(),
            1 => build_symmetric(d, n).unwrap(),
            _ => build_subshift(d, &[], n).unwrap(),
        };
        let v = sys.validate(1e-10);
        prop_assert!(v.pass(), "{v:?}");
    }

    /// Quiver builder: random supported nonnegative matrices validate, and
    /// fiber dimensions match the boolean support count.
    #[test]
    fn quiver_axiom_and_support(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let d = rng.gen_range(2..=3);
        let p = DMatrix::from_fn(d, d, |_, _| {
            if rng.gen_bool(0.6) { rng.gen_range(0.2..2.0) } else { 0.0 }
        });
        // Ensure faithfulness by seeding each column.
        let mut p = p;
        for c in 0..d {
            if (0..d).all(|r| p[(r, c)] == 0.0) {
                let r = rng.gen_range(0..d);
                p[(r, c)] = rng.gen_range(0.2..2.0);
            }
        }
        let sys = build_quiver(&p, 4).unwrap();
        prop_assert!(sys.validate(1e-10).pass());
        let qd = sys.quiver.as_ref().unwrap();
        for level in 1..=4usize {
            prop_assert_eq!(sys.fiber_dim(level), qd.support_count(level));
        }
    }

    /// Norm multiplicativity of the Kronecker product.
    #[test]
    fn kron_norm_multiplicative(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let a = CMatrix::from_fn(3, 2, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let b = CMatrix::from_fn(2, 4, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let lhs = op_norm(&kron(&a, &b));
        prop_assert!((lhs - op_norm(&a) * op_norm(&b)).abs() < 1e-9);
    }
}
