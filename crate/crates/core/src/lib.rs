//! Periodic one-dimensional cold-plasma solver.
//!
//! The evolved unknowns are the density perturbation `eta = n - 1` and the
//! ionic velocity `u`; the magnetic perturbation `b = B - 1` is slaved to
//! `eta` through an elliptic constraint and re-solved whenever it is needed.
//!
//! ```text
//! eta_t + (u eta)_x + u_x = 0
//! u_t + u u_x + (1 + b) b_x / (1 + eta) = 0
//! b - eta - (b_x / (1 + eta))_x = 0
//! ```
//!
//! Modules:
//! * [`grid`]: collocation grid, derivatives, Sobolev norms, mollifier.
//! * [`elliptic`]: constraint solve, residual certificate, estimate checks.
//! * [`dynamics`]: tendencies (plain and mollified), RK4, run driver.
//! * [`diagnostics`]: energy functional, minimum tracking, budgets.
//! * [`harness`]: refinement, time-step, mollifier and steepening studies.
//! * [`config`] and [`output`]: configuration grammar and run files.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod par;
pub mod elliptic;
pub mod dynamics;
pub mod diagnostics;
pub mod config;
pub mod output;
pub mod harness;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Scheme};
pub use par::Execution;
pub use config::{InitialCondition, SolverConfig};
