//! Modified Patankar-Runge-Kutta (MPRK) integrators for production-destruction
//! systems.
//!
//! MPRK schemes modify explicit Runge-Kutta methods so that every step stays
//! strictly positive and conserves `Σ y_i` for any step size, at the price of
//! one small linear solve per stage. The crate provides:
//!
//! - [`pds`]: fully conservative production-destruction systems and the
//!   built-in benchmark problems,
//! - [`smallsolve`]: dense pivoted elimination plus a cancellation-free
//!   solver for the per-step M-matrix systems,
//! - [`mprk`]: MPE, MPElin, MPRK22(α), MPRK22ncs(α) and convex-PWD kernels,
//!   plus unmodified explicit baselines,
//! - [`reference`]: Dormand-Prince and self-convergence reference solutions,
//! - [`harness`]: fixed and geometric drivers, the relative error metric,
//!   observed orders and α-sweeps,
//! - [`csvio`]: CSV output used by the `patankar` binary.
//!
//! ```
//! use patankar::{harness, mprk::SchemeConfig, pds};
//!
//! let problem = pds::linear_test(5.0).unwrap();
//! let method = SchemeConfig::mprk22(0.5).into();
//! let traj = harness::integrate_fixed(&problem, &method, &[0.9, 0.1], (0.0, 1.75), 0.25).unwrap();
//! assert!(traj.all_positive());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csvio;
pub mod error;
pub mod harness;
pub mod mprk;
pub mod pds;
pub mod reference;
pub mod smallsolve;

pub use error::{Error, Result};
pub use harness::{ConvergenceReport, Trajectory};
pub use mprk::{Method, SchemeConfig, StepRecord};
pub use pds::{PdsProblem, State};
pub use smallsolve::DenseMatrix;
