//! Numerical laboratory for spectral gaps of periodic media with trapping
//! screens: closed-form gap edges, capacity computations, cell meshes, FEM
//! eigenproblems and band sweeps.

pub mod analytic;
pub mod band;
pub mod capacity;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod sparse;

pub use error::{Error, Result};
