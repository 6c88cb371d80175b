//! Operator expressions: surface syntax for elements of the Toeplitz
//! algebra.
//!
//! Grammar (whitespace insignificant, adjoint binds tightest):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := atom '~'*
//! atom   := 'I' | 'Q'n | 'R'n | 'Rp'n | 'S'n '[' label ']'
//!         | '(' re ('+'|'-') im 'i' ')' | '(' expr ')'
//! ```
//!
//! Fiber labels resolve against the declared system: either an exact basis
//! label of `X(n)` (`f12` for quivers, word labels for subshifts) or the
//! positional form `e<i>` on scalar-base systems.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fock::{Fock, FockOperator};
use crate::linalg::{identity, C64, CMatrix};
use crate::reps::CovariantRep;
use crate::systems::SubproductSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjKind {
    Q,
    R,
    Rp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Identity,
    Scalar(C64),
    Gen { level: usize, fiber: String },
    Proj { kind: ProjKind, level: usize },
    Adj(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown fiber label '{label}' at level {level}")]
    UnknownFiber { label: String, level: usize },
    #[error("level {level} exceeds the available range {max}")]
    LevelOutOfRange { level: usize, max: usize },
}

/// Signed degrees an expression can contribute, computable without a system.
pub fn degree_profile(e: &Expr) -> BTreeSet<i64> {
    match e {
        Expr::Identity | Expr::Scalar(_) | Expr::Proj { .. } => [0].into(),
        Expr::Gen { level, .. } => [*level as i64].into(),
        Expr::Adj(x) => degree_profile(x).iter().map(|k| -k).collect(),
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            degree_profile(a).union(&degree_profile(b)).cloned().collect()
        }
        Expr::Mul(a, b) => {
            let da = degree_profile(a);
            let db = degree_profile(b);
            let mut out = BTreeSet::new();
            for x in &da {
                for y in &db {
                    out.insert(x + y);
                }
            }
            out
        }
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) => 2,
        Expr::Adj(..) => 3,
        _ => 4,
    }
}

fn print_prec(e: &Expr, min: u8, out: &mut String) {
    let wrap = prec(e) < min;
    if wrap {
        out.push('(');
    }
    match e {
        Expr::Identity => out.push('I'),
        Expr::Scalar(c) => {
            let sign = if c.im.is_sign_negative() { '-' } else { '+' };
            out.push_str(&format!("({}{sign}{}i)", c.re, c.im.abs()));
        }
        Expr::Gen { level, fiber } => out.push_str(&format!("S{level}[{fiber}]")),
        Expr::Proj { kind, level } => {
            let k = match kind {
                ProjKind::Q => "Q",
                ProjKind::R => "R",
                ProjKind::Rp => "Rp",
            };
            out.push_str(&format!("{k}{level}"));
        }
        Expr::Adj(x) => {
            print_prec(x, 3, out);
            out.push('~');
        }
        Expr::Add(a, b) => {
            print_prec(a, 1, out);
            out.push('+');
            print_prec(b, 2, out);
        }
        Expr::Sub(a, b) => {
            print_prec(a, 1, out);
            out.push('-');
            print_prec(b, 2, out);
        }
        Expr::Mul(a, b) => {
            print_prec(a, 2, out);
            out.push('*');
            print_prec(b, 3, out);
        }
    }
    if wrap {
        out.push(')');
    }
}

/// Canonical text form; `parse(print(e)) == e`.
pub fn print(e: &Expr) -> String {
    let mut s = String::new();
    print_prec(e, 0, &mut s);
    s
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse { offset: self.pos, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn parse_usize(&mut self) -> Result<usize, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected a level number");
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| ExprError::Parse { offset: start, message: "bad number".into() })
    }

    fn parse_float(&mut self) -> Result<f64, ExprError> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
            self.pos += 1;
        }
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos == start {
            return self.err("expected a number");
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| ExprError::Parse { offset: start, message: "bad float".into() })
    }

    fn parse_label(&mut self) -> Result<String, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected a fiber label");
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string())
    }

    /// `(re ± im i)` — tried first on '(' with backtracking.
    fn try_scalar(&mut self) -> Option<C64> {
        let save = self.pos;
        let attempt = (|| -> Result<C64, ExprError> {
            self.expect(b'(')?;
            let re = self.parse_float()?;
            self.skip_ws();
            let sign = match self.src.get(self.pos) {
                Some(b'+') => 1.0,
                Some(b'-') => -1.0,
                _ => return self.err("expected '+' or '-'"),
            };
            self.pos += 1;
            let im = self.parse_float()?;
            self.expect(b'i')?;
            self.expect(b')')?;
            Ok(C64::new(re, sign * im))
        })();
        match attempt {
            Ok(c) => Some(c),
            Err(_) => {
                self.pos = save;
                None
            }
        }
    }

    fn parse_atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                if let Some(c) = self.try_scalar() {
                    return Ok(Expr::Scalar(c));
                }
                self.expect(b'(')?;
                let e = self.parse_expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(b'I') => {
                self.pos += 1;
                Ok(Expr::Identity)
            }
            Some(b'S') => {
                self.pos += 1;
                let level = self.parse_usize()?;
                self.expect(b'[')?;
                let fiber = self.parse_label()?;
                self.expect(b']')?;
                Ok(Expr::Gen { level, fiber })
            }
            Some(b'Q') => {
                self.pos += 1;
                let level = self.parse_usize()?;
                Ok(Expr::Proj { kind: ProjKind::Q, level })
            }
            Some(b'R') => {
                self.pos += 1;
                let kind = if self.src.get(self.pos) == Some(&b'p') {
                    self.pos += 1;
                    ProjKind::Rp
                } else {
                    ProjKind::R
                };
                let level = self.parse_usize()?;
                Ok(Expr::Proj { kind, level })
            }
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
            None => self.err("unexpected end of input"),
        }
    }

    fn parse_factor(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.parse_atom()?;
        while self.eat(b'~') {
            e = Expr::Adj(Box::new(e));
        }
        Ok(e)
    }

    fn parse_term(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.parse_factor()?;
        while self.eat(b'*') {
            let rhs = self.parse_factor()?;
            e = Expr::Mul(Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn parse_expr(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.parse_term()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.parse_term()?;
                e = Expr::Add(Box::new(e), Box::new(rhs));
            } else if self.eat(b'-') {
                let rhs = self.parse_term()?;
                e = Expr::Sub(Box::new(e), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(e)
    }
}

pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let e = p.parse_expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

/// Resolve a fiber label to a basis index of `X(level)`.
pub fn resolve_fiber(
    system: &SubproductSystem,
    level: usize,
    label: &str,
) -> Result<usize, ExprError> {
    if level > system.n_max {
        return Err(ExprError::LevelOutOfRange { level, max: system.n_max });
    }
    if let Some(i) = system.fibers[level].label_index(label) {
        return Ok(i);
    }
    if system.q == 1 {
        if let Some(num) = label.strip_prefix('e') {
            if let Ok(i) = num.parse::<usize>() {
                if i >= 1 && i <= system.fiber_dim(level) {
                    return Ok(i - 1);
                }
            }
        }
    }
    Err(ExprError::UnknownFiber { label: label.to_string(), level })
}

/// Evaluate on the truncated Fock module.
pub fn eval_fock(e: &Expr, fock: &Fock) -> Result<FockOperator, ExprError> {
    let level_err = |level: usize| ExprError::LevelOutOfRange { level, max: fock.n_max() };
    match e {
        Expr::Identity => Ok(fock.identity_op()),
        Expr::Scalar(c) => Ok(fock.identity_op().scale(*c)),
        Expr::Gen { level, fiber } => {
            let idx = resolve_fiber(&fock.system, *level, fiber)?;
            fock.shift_basis(*level, idx).map_err(|_| level_err(*level))
        }
        Expr::Proj { kind, level } => {
            let res = match kind {
                ProjKind::Q => fock.q_proj(*level),
                ProjKind::R => fock.r_proj(*level),
                ProjKind::Rp => fock.rp_proj(*level),
            };
            res.map_err(|_| level_err(*level))
        }
        Expr::Adj(x) => Ok(eval_fock(x, fock)?.adjoint()),
        Expr::Add(a, b) => Ok(&eval_fock(a, fock)? + &eval_fock(b, fock)?),
        Expr::Sub(a, b) => Ok(&eval_fock(a, fock)? - &eval_fock(b, fock)?),
        Expr::Mul(a, b) => Ok(&eval_fock(a, fock)? * &eval_fock(b, fock)?),
    }
}

/// Evaluate under a covariant representation, substituting `T_n` for `S_n`.
/// Projections use the reconstruction `π(R_n') = Σ_κ T_n(e_κ) T_n(e_κ)*`;
/// `Q_n` therefore needs level `n + 1` inside the truncation.
pub fn eval_rep(e: &Expr, rep: &CovariantRep) -> Result<CMatrix, ExprError> {
    let n_max = rep.system.n_max;
    match e {
        Expr::Identity => Ok(identity(rep.dim())),
        Expr::Scalar(c) => Ok(identity(rep.dim()) * *c),
        Expr::Gen { level, fiber } => {
            let idx = resolve_fiber(&rep.system, *level, fiber)?;
            Ok(rep.t[*level][idx].clone())
        }
        Expr::Proj { kind, level } => {
            let need = match kind {
                ProjKind::Rp => *level,
                _ => *level + 1,
            };
            if need > n_max {
                return Err(ExprError::LevelOutOfRange { level: need, max: n_max });
            }
            match kind {
                ProjKind::Rp => Ok(rep.rp_matrix(*level)),
                ProjKind::Q => Ok(rep.rp_matrix(*level) - rep.rp_matrix(*level + 1)),
                ProjKind::R => Ok(identity(rep.dim()) - rep.rp_matrix(*level + 1)),
            }
        }
        Expr::Adj(x) => Ok(eval_rep(x, rep)?.adjoint()),
        Expr::Add(a, b) => Ok(eval_rep(a, rep)? + eval_rep(b, rep)?),
        Expr::Sub(a, b) => Ok(eval_rep(a, rep)? - eval_rep(b, rep)?),
        Expr::Mul(a, b) => Ok(eval_rep(a, rep)? * eval_rep(b, rep)?),
    }
}

/// Seeded random expression over the system's generators, used by the
/// self-test suites.
pub fn random_expr(rng: &mut ChaCha8Rng, system: &SubproductSystem, depth: usize) -> Expr {
    if depth == 0 {
        return match rng.gen_range(0..4) {
            0 => Expr::Identity,
            1 => {
                let max_level = system.n_max.min(2).max(1);
                let level = rng.gen_range(1..=max_level);
                let dim = system.fiber_dim(level);
                let idx = rng.gen_range(0..dim);
                Expr::Gen {
                    level,
                    fiber: system.fibers[level].basis[idx].label.clone(),
                }
            }
            2 => {
                let kind = [ProjKind::Q, ProjKind::R, ProjKind::Rp][rng.gen_range(0..3)];
                Expr::Proj { kind, level: rng.gen_range(0..=system.n_max.min(3)) }
            }
            _ => Expr::Scalar(C64::new(
                (rng.gen_range(-40..=40) as f64) / 16.0,
                (rng.gen_range(-40..=40) as f64) / 16.0,
            )),
        };
    }
    match rng.gen_range(0..4) {
        0 => Expr::Add(
            Box::new(random_expr(rng, system, depth - 1)),
            Box::new(random_expr(rng, system, depth - 1)),
        ),
        1 => Expr::Sub(
            Box::new(random_expr(rng, system, depth - 1)),
            Box::new(random_expr(rng, system, depth - 1)),
        ),
        2 => Expr::Mul(
            Box::new(random_expr(rng, system, depth - 1)),
            Box::new(random_expr(rng, system, depth - 1)),
        ),
        _ => Expr::Adj(Box::new(random_expr(rng, system, depth - 1))),
    }
}
