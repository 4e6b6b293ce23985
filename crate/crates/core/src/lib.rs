//! Optimal control of the heat equation with an uncertain, affinely
//! parametrized diffusion coefficient.
//!
//! The crate discretizes the state and adjoint equations with P1 finite
//! elements and implicit Euler, averages them over randomly shifted rank-1
//! lattice rules built by component-by-component construction, and minimizes
//! either the expected tracking cost or its entropic risk with projected
//! gradient descent.
//!
//! Controls `z` in `L²(V';I)` are never stored directly. Every control is
//! represented by its Riesz preimage `w = R_V⁻¹ z`, a trajectory of nodal
//! vectors, so that dual norms become stiffness-weighted sums.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod descent;
pub mod error;
pub mod fem;
pub mod field;
pub mod lattice;
pub mod parabolic;
pub mod risk;
pub mod study;
pub(crate) mod util;

pub use error::{Error, Result};
