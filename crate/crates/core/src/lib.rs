//! Newton-type solvers for unconstrained two-player Nash equilibrium
//! problems.
//!
//! The main entry point is [`descent::solve`], a Jacobi-type Newton method
//! whose line search evaluates each player at the other player's predicted
//! decision. [`baselines`] has plain Newton and exact best-response
//! iterations for comparison, [`suite`] the built-in test problems and
//! [`diagnostics`] numeric certificates on finished runs.
//!
//! ```
//! use nep_newton::{descent::{solve, SolveStatus, SolverConfig}, suite::make_example};
//!
//! let p = make_example(1).unwrap();
//! let report = solve(&p, &[-5.0], &[1.0], &SolverConfig::default()).unwrap();
//! assert_eq!(report.status, SolveStatus::Converged);
//! assert_eq!((report.final_x1[0], report.final_x2[0]), (2.0, 1.0));
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod descent;
pub mod diagnostics;
pub mod error;
pub mod finite_diff;
pub mod linalg;
pub mod problem;
pub mod study;
pub mod suite;

pub use descent::{solve, SolveReport, SolveStatus, SolverConfig};
pub use error::{NepError, Result};
pub use problem::NepProblem;
