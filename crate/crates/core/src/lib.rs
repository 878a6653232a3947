//! Parallel-in-iteration optimization with multigrid reduction-in-time.
//!
//! A run of `K` fixed-step optimizer iterations `u_{k+1} = Φ(u_k)` is the
//! forward substitution of a block lower-bidiagonal "all-at-once" system.
//! This crate solves that system with multilevel MGRIT (linear and FAS
//! variants), using the explicit optimizer step on the fine level and its
//! implicit (proximal) analogue with a coarsened step on every coarser level.
//!
//! The crate is `no_std` and only needs `alloc`. Parallel execution, timing,
//! file formats and the command line live in the `mgritopt` companion crate;
//! the hooks they plug into are [`exec::Executor`] and [`mgrit::Monitor`].

#![no_std]
#![deny(rust_2018_idioms)]
// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
mod error;
pub mod exec;
pub mod linalg;
pub mod mgrit;
pub mod problems;
pub mod propagators;
pub mod sequential;
pub mod speedup;
pub mod vector;

pub use error::{Error, Result};
pub use linalg::{Laplacian, ShiftedFactorization};
pub use mgrit::{
    adaptive_horizon_solve, mgrit_solve, AdaptiveConfig, AdaptiveReport, ConvergenceReport,
    CorrectionScheme, GrowthPolicy, HaltReason, IterationHierarchy, IterationView, LevelOperator,
    MgritConfig, MgritSolution, MgritSolver, Monitor,
};
pub use problems::{Problem, ProblemDescriptor, ProblemKind};
pub use propagators::{GeneralizedGradient, Propagator, PropagatorKind};
pub use sequential::{
    run_sequential, Method, SequentialConfig, SequentialRun, Storage, Trajectory,
};
