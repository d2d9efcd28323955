//! Thermodynamic formalism on polynomial parameter families.
//!
//! Periodic cycles on the Julia set are the atoms of every estimator here:
//! topological pressure, Gibbs measures, Bowen numbers, and the Hessian and
//! pressure forms on hyperbolic components built from them.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bowen;
pub mod error;
pub mod family;
pub mod fate;
pub mod metric;
pub mod motion;
pub mod orbits;
pub mod thermo;
pub mod par;
pub mod poly;
pub mod roots;

pub use error::{Error, Result};
pub use num_complex::Complex64;
