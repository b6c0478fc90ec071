//! Structured low-rank tensor completion with a latent trace-norm
//! regularizer, solved through a partial dual over products of unit
//! Frobenius spheres.
//!
//! The outer problem minimizes `g(U)` over `U = (U_1, ..., U_K)` with
//! `||U_k||_F = 1`; each evaluation of `g` solves a concave inner problem over
//! the dual variables `(Z, s)`. Structural constraints on the completed tensor
//! (none, entrywise nonnegativity, Hankel) enter only through `s`.

pub mod constraint;
pub mod dual;
pub mod error;
pub mod factors;
pub mod inner;
pub mod io;
pub mod manifold;
pub mod operator;
pub mod outer;
pub mod problem;
pub mod synth;
pub mod tensor;

pub use constraint::{ConstraintKind, DualMultiplier, HankelLift};
pub use dual::{
    duality_gap, eval_g, euclidean_grad, euclidean_hess_vec, nuclear_certificate, primal_objective, recover_primal, DualValue,
    GapReport, PrimalValue,
};
pub use error::{Error, Result};
pub use factors::{FactorPoint, Factors, GradientTuple, TangentVector};
pub use manifold::SphereProductManifold;
pub use outer::{outer_solve, outer_solve_with, IterationRecord, OuterParams, OuterResult, OuterStatus, SolverKind};
pub use inner::{solve_directional, solve_inner, solve_inner_below, DirectionalSolution, InnerSolution, SolverParams};
pub use problem::{Problem, ProblemSpec};
pub use synth::{eval_recovery, generate_synthetic, RecoveryMetrics, SyntheticKind, SyntheticProblem};
pub use tensor::{DenseTensor, SparseTensor, Support};
