//! Real-time-iteration NMPC for input-constrained systems with an
//! execution-time certificate.
//!
//! Each sampling instant is split into a preparation phase, which
//! linearizes the model along the shifted guess ([`sensitivity`]) and
//! condenses the problem into a box-constrained QP ([`condense`]), and a
//! feedback phase, which solves that QP with a feasible full-Newton
//! interior-point method ([`ipm`]) whose iteration count depends only on the
//! problem dimension and tolerance. The Newton systems are solved with a
//! factorized Riccati recursion ([`riccati`]) so the condensed Hessian is
//! never formed. [`certify`] turns the dimensions into an exact flop count.

// `!(x > 0.0)` checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod condense;
pub mod error;
pub mod ipm;
pub mod linalg;
pub mod model;
pub mod qp_file;
pub mod riccati;
pub mod rti;
pub mod sensitivity;
pub mod sim;

pub use certify::{certify, Certificate, ProblemDims};
pub use error::{Error, Result};
pub use ipm::{iteration_count, solve_box_qp, BoxQpSolution, DenseBackend, NewtonBackend};
pub use model::{Dynamics, LinearModel, Lorenz, LorenzParams};
pub use riccati::RiccatiBackend;
pub use rti::{BackendKind, RtiController, RtiSettings};
pub use sensitivity::IntegratorSpec;
pub use sim::{run_closed_loop, SimConfig, SimOptions};
