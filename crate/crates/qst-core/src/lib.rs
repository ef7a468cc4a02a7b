//! Exact-diagonalization simulator and parameter optimizer for a
//! voltage-controlled Hubbard spin transistor.

pub mod dense;
pub mod error;
pub mod evolve;
pub mod fockspace;
pub mod hamiltonian;
pub mod measure;
pub mod protocols;
pub mod states;

pub use error::{Error, Result};
