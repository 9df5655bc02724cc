//! Finite-difference laboratory for singular elliptic problems with a
//! gradient term: `-Δu = g(u) + λ|∇u|^p + μ f(x,u)` in a box, `u = 0` on
//! its boundary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bifurcate;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod nonlin;
pub mod odeprofile;
pub mod problem;
pub mod problem_file;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
