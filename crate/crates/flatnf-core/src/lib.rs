//! Computational machinery for long-time stability of cubic NLS on flat
//! tori: lattice geometry, resonances, frequency clusters, re-centered
//! polynomial normal forms, non-resonant measure estimates and a symplectic
//! spectral simulator.

pub mod clusters;
pub mod error;
pub mod lattice;
pub mod measure;
pub mod normalform;
pub mod polyalg;
pub mod reference;
pub mod resonance;
pub mod selftest;
pub mod simulator;

pub use error::{FlatError, Result};
pub use num_complex::Complex64;
