//! Paratuck2 and CP tensor decompositions solved by seven interchangeable
//! schemes, with the metrics and benchmark machinery to compare them.
//!
//! The decision vector every solver optimizes is the flattening of the five
//! Paratuck2 factor blocks; the objective is the residual tensor norm. All
//! derivatives are finite-difference approximations, so the solvers only
//! ever see objective evaluations.

// Index-based loops mirror the subscripted update rules they implement.
#![allow(clippy::needless_range_loop)]
// Negated comparisons are deliberate where NaN must take the fallback path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cp;
pub mod decomp;
pub mod derivatives;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod solvers;
pub mod tensor;

pub use bench::{run_benchmark, synth_imbalanced_tensor, synth_tensor, BenchPlan, BenchRecord, ProblemSpec};
pub use cp::{cp_als, CpAlsConfig, CpFitResult};
pub use decomp::{
    cp_reconstruct, flatten, init_factors, objective, paratuck2_reconstruct, unflatten, CpFactors,
    DiagStack, ParamLayout, ParamVector, Paratuck2Factors,
};
pub use derivatives::{
    fd_gradient, hessian_vec_product, wolfe_line_search, FdConfig, LineSearchStep, Objective,
};
pub use error::{Error, Result};
pub use metrics::{
    accuracy, accuracy_from_norms, convergence_rate_q, convergence_rate_q_vectors,
    convergence_speed, convergence_speed_with, Ordinate, SpeedMode,
};
pub use solvers::{
    solve, solve_adam, solve_als, solve_aphen, solve_bfgs, solve_gd, solve_nag, solve_saga,
    ConvergenceTrace, Scheme, SolveResult, SolverConfig, StopReason, TraceRecord,
};
pub use tensor::{khatri_rao, kronecker, outer, DenseMatrix, DenseTensor3, RealVector};
