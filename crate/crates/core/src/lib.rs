//! Conformal causal viscous relativistic fluid: first-order reduction,
//! characteristic analysis, pseudo-spectral evolution on the 3-torus and a
//! frozen-coefficient iteration harness.

pub mod characteristics;
pub mod cli;
pub mod config;
pub mod error;
pub mod evolve;
pub mod firstorder;
pub mod grid;
pub mod picard;
pub mod state;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
