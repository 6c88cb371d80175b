//! Numerical laboratory for finite-dimensional subproduct systems.
//!
//! The crate builds subproduct systems over `C^q` (product, symmetric,
//! subshift and positive-matrix quiver families), their truncated Fock
//! modules and shift operators, and provides diagnostics for the
//! Cuntz-Pimsner ideal `{S : ||S Q_n|| -> 0}`, covariant representations
//! (classification and Wold decomposition) and strong Morita equivalence
//! through the linking system of an imprimitivity bimodule.
//!
//! Everything is exact finite linear algebra in complex double precision;
//! truncation effects are tracked by per-column exactness flags rather than
//! hidden behind tolerances.

pub mod expr;
pub mod fock;
pub mod graded;
pub mod ideal;
pub mod linalg;
pub mod morita;
pub mod reps;
pub mod systems;

pub use fock::{Fock, FockOperator, LevelGrading, LevelOp};
pub use graded::{BasisVector, GradedCorrespondence};
pub use linalg::{kron, op_norm, orthonormal_range, CMatrix, C64};
pub use systems::{Family, QuiverData, SubproductSystem, SystemDescription};
