//! Adaptive biasing potential (ABP) self-interacting diffusion on the flat
//! torus, with a quadrature oracle and convergence diagnostics.

pub mod bias;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod family;
pub mod harness;
pub mod kernel;
pub mod lattice;
pub mod measure;
pub mod oracle;
mod output;
pub mod potential;
pub mod torus;

pub use error::{Error, Result};
