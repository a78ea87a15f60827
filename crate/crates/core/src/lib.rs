//! Numerical toolkit for the cubic Silnikov-type flow
//! `x' = y, y' = z, z' = x^3 - a^2 x - y - b z`: equilibria, adaptive
//! integration with section events, closed-orbit detection, location of
//! period-doubling parameters and invariant-manifold sampling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod error;
pub mod integrator;
pub mod manifold;
pub mod model;
pub mod orbit;
pub mod par;

pub use error::{Error, Result};
pub use model::{State, SystemParams};
pub use num_complex::Complex64;
