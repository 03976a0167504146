//! Survey descent: a multipoint generalization of gradient descent for
//! nonsmooth first-order minimization.
//!
//! Instead of a single iterate, the method maintains a *survey* of `k`
//! points. Each iteration updates every point by projecting its gradient
//! step onto a region carved out by the other points' linear models — a
//! problem that reduces, after a change of variables, to projecting a
//! target onto an intersection of Euclidean balls. Near a nondegenerate
//! minimizer of a max-of-smooth objective that projection has a closed
//! form in linear algebra plus one scalar square root; far from it, a
//! Dykstra alternating-projection fallback keeps the iteration defined.
//!
//! Module map:
//!
//! * [`oracle`] — first-order oracle trait and the built-in objectives.
//! * [`mbp`] — the ball-intersection projection (closed form, multiplier
//!   recovery, KKT-checked inequality solve).
//! * [`dykstra`] — exact projection onto an intersection of balls by
//!   alternating projections; the robust fallback and independent oracle.
//! * [`survey`] — subproblem assembly from oracle data, the per-iteration
//!   solve, and the run driver.
//! * [`trace`] — per-iteration records with CSV and JSON serialization.
//! * [`init`] — quasi-Newton warm start and survey initialization
//!   heuristics.
//! * [`analysis`] — critical weights, smooth-subspace projector, reference
//!   steps, and convergence-rate reports.

pub mod analysis;
pub mod dykstra;
mod error;
pub mod init;
pub mod mbp;
pub mod oracle;
pub mod survey;
pub mod trace;

pub use error::{Error, Result};
pub use oracle::{Evaluation, FirstOrderOracle, MaxOfSmoothObjective, Objective};
pub use survey::{RunConfig, Survey};
pub use trace::RunTrace;

