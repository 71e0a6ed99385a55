//! Dual decomposition for separable convex problems with coupled linear
//! constraints, run under simulated bounded asynchrony and inexact agent
//! solves, together with the closed-form convergence envelopes it must obey.
//!
//! The problem is
//!
//! ```text
//! minimize  F(x) = sum_i f_i(x_i)   subject to  A x <= b,  x_i in X_i
//! ```
//!
//! with box-constrained separable quadratics `f_i`. The coordinator runs
//! projected dual ascent `lambda <- [lambda + alpha (A x_hat - b)]^+`.
//!
//! Start with [`num::build_num`] and [`engine::run`]; [`bounds`] and
//! [`reference`] turn a trace into measured-versus-envelope comparisons.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod num;
pub mod problem;
pub mod reference;
pub mod schedule;
pub mod subproblem;

pub use engine::{run, RunConfig, RunTrace, Termination, TraceRow};
pub use error::{Error, Result};
pub use num::{build_num, scenario, Scenario};
pub use problem::{BoxQuadraticAgent, CoupledProblem, LipschitzData};
pub use reference::{solve_reference, ReferenceSolution};
pub use schedule::{generate_schedule, AsyncSchedule};
pub use subproblem::{InexactOracle, LocalSubproblem};
