//! Least-squares estimation of the per-step coefficient functions.
//!
//! A fitted function is `ĝ(x) = Σ_l α_l ψ_l(x)` for a basis `ψ` described by
//! [`BasisSpec`]. The piecewise basis has a block-diagonal Gram matrix, so
//! every cell is solved on its own.

pub(crate) mod basis;
mod solve;
mod table;

pub use basis::{evaluate_basis, monomial_exponents, BasisEvaluator, BasisSpec};
pub use solve::{fit, CellDiagnostic, FitDiagnostics, NormalEquations, CONDITION_LIMIT};
pub use table::{truncate, CoefficientTable};
