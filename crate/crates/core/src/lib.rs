//! Numerical engine for parastatistics.
//!
//! An [`rmatrix::RMatrix`] solving the constant Yang-Baxter equation fixes a
//! species of paraparticles. From it the crate builds the Fock space and its
//! operators ([`fockspace`], [`bilinears`]), free-gas thermodynamics
//! ([`freegas`]) and an exactly solvable spin chain realised through a
//! matrix-product Jordan-Wigner string ([`spinchain`]).

pub mod bilinears;
pub mod cli;
pub mod error;
pub mod fockspace;
pub mod freegas;
pub mod linalg;
pub mod rmatrix;
pub mod spinchain;
pub mod tensor;

pub use error::{Error, Result};
