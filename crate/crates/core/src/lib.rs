//! Numerical laboratory for divergence-form operators
//! `L = (1/V) Σ ∂ᵢ(V aᵢⱼ ∂ⱼ)` with possibly degenerate, hypoelliptic principal
//! part.

pub mod dirichlet;
pub mod discretize;
pub mod error;
pub mod expr;
pub mod green;
pub mod grid;
pub mod harnack;
pub mod linsolve;
pub mod operator;
pub mod propagation;
pub mod sparse;
pub mod viz;

pub use error::{Error, Result};
