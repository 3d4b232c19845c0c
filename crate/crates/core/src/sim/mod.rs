//! Euler simulation of SDE paths, the discretised tangent process and the
//! backward pathwise sensitivities used by the integral control variate.

mod check;
mod grid;
mod model;
pub(crate) mod path;

pub use check::{check_derivatives, DerivativeCheck, FD_STEP, FD_TOLERANCE};
pub use grid::TimeGrid;
pub use model::{FiniteDifference, SdeModel};
pub use path::{
    backward_sensitivities, euler_step, propagator_matrix, sample_exact_terminal, simulate_path,
    PathBundle, PathSimulator,
};
