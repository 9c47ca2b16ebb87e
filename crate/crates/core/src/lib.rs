//! Numerical experiments on viscous flow around a small obstacle in the
//! plane: exterior Biot-Savart via conformal maps, the cutoff corrector,
//! the scaled Poincaré constant, full-plane Euler and exterior
//! Navier-Stokes solvers, and the sweep harness that measures convergence
//! rates as viscosity and obstacle size vanish together.

// `!(x > 0.0)` also rejects NaN; index loops mirror the tensor notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::len_without_is_empty)]

pub mod biot_savart;
pub mod commands;
pub mod config;
pub mod corrector;
pub mod error;
pub mod euler;
pub mod fft;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod ns;
pub mod poincare;
pub mod quadrature;

pub use error::{Error, Result};

/// A point or vector in the plane.
pub type Vec2 = [f64; 2];

/// Counterclockwise rotation by a right angle, `(-x2, x1)`.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    [-v[1], v[0]]
}

#[inline]
pub fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}
