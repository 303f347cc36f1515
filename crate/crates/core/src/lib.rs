//! Numerical laboratory for null controllability of heat equations with memory.
//!
//! The memory equation on `(0, L)` with Dirichlet boundary values,
//!
//! ```text
//! y_t - int_0^t M(t-s) Δy(s) ds - b Δy = χ_{ω(t)} u,
//! ```
//!
//! is reduced to a heat equation coupled with a finite cascade of ODEs when
//! `M` is an exp-polynomial, integrated with Crank–Nicolson, and driven towards
//! `y(T) = 0`, `int_0^T M(T-s) Δy(s) ds = 0` by penalized least squares.

mod banded;
pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod reduction;
pub mod simulator;
pub mod support;

pub use error::{Error, Result};
