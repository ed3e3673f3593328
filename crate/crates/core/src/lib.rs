//! Multivariate functions built from a handful of binary primitives and
//! three structural operators (lift, compose, diagonal), with partial
//! inverses, an equation solver and a numerical superposition
//! (Kolmogorov–Arnold) decomposition.

#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod expr;
pub mod frontend;
pub mod inverse;
pub mod kst;
pub mod solver;
pub mod structure;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use expr::{BoxDomain, Expr, Interval, Node, Primitive, DEFAULT_SEED, DEFAULT_TOL};
