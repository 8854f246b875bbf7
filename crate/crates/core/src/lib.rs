//! Model-free adaptive control (MFAC) toolkit.
//!
//! The crate is organised around the full-form equivalent dynamic
//! linearization of a MIMO plant and the controllers built on top of it:
//!
//! - [`edlm`]: regressor windows, pseudo-Jacobian matrices and their
//!   construction from a differentiable plant model.
//! - [`controller`]: one-step MFAC control laws (unconstrained, box
//!   constrained, second-order fixed point, iterative) and the
//!   condition-number lambda schedule.
//! - [`analysis`]: polynomial matrices in the backward shift operator,
//!   closed-loop stability and static-error evaluation.
//! - [`plant`]: plant models, reference signals, the closed-loop simulation
//!   driver and its CSV log.
//! - [`kinematics`]: modified-DH forward kinematics, task Jacobian, and
//!   damped least-squares inverse kinematics for a 6-DOF arm.
//! - [`pathgen`]: straight-line Cartesian paths with quintic timing and
//!   geodesic quaternion orientation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controller;
pub mod edlm;
pub mod error;
pub mod kinematics;
pub mod linalg;
pub mod pathgen;
pub mod plant;

pub use error::{Error, Result};
