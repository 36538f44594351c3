//! Spectral solver for an inverse coefficient problem for a hyperbolic
//! equation with nonlocal time conditions and a non-self-adjoint spatial
//! boundary condition.
//!
//! Given `phi`, `psi`, `f` and an observation `h(t) = u(1/2, t)`, recover
//! `a(t)` and `u(x, t)` in `u_tt - u_xx = a(t) u + f` on `(0, 1) x (0, T)`.

pub mod basis;
pub mod conditions;
pub mod error;
pub mod expr;
pub mod inverse;
pub mod kernels;
pub mod manufactured;
pub mod problem;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
