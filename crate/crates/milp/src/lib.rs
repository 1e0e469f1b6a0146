//! Sparse mixed-integer linear programming with an embedded exact solver.
//!
//! The solver stack is deliberately small and auditable: a dense two-phase
//! primal simplex for LP relaxations, best-bound branch-and-bound on top, an
//! exhaustive [`brute_force`] oracle for cross-checking at test scale, and an
//! LP-format [`export_model`] writer for interop with industrial solvers.
//!
//! All arithmetic is generic over the scalar type through [`Scalar`]; the
//! concrete aliases at the crate root ([`Model`], [`Solution`]) use `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

mod bnb;
mod brute;
mod export;
mod model;
mod simplex;
mod solution;

pub use bnb::solve_mip;
pub use brute::{brute_force, MAX_DISCRETE};
pub use export::export_model;
pub use model::{Constraint, MilpModel, RowSense, Sense, VarKind, Variable};
pub use simplex::solve_lp;
pub use solution::{
    relative_gap, BranchRule, MilpSolution, NodeSelection, SolverConfig, Status,
};

/// Floating-point scalar the solver is generic over (f32 or f64).
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Sum + Debug + Display + Default + 'static
{
}
impl<T> Scalar for T where
    T: Float + NumAssign + FromPrimitive + Sum + Debug + Display + Default + 'static
{
}

/// Concrete f64 model, the type the fleet crates work with.
pub type Model = MilpModel<f64>;
pub type Solution = MilpSolution<f64>;

#[derive(Debug, thiserror::Error)]
pub enum MilpError {
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("too many discrete variables for enumeration: {count} > {limit}")]
    TooManyDiscrete { count: usize, limit: usize },
}
