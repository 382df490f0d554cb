//! Spin-boson dynamics with a sub-Ohmic bath through the free-pole
//! hierarchical equations of motion, the tier-truncated hierarchy as a family
//! of master equations, and memory-kernel extraction.

pub mod barycentric;
pub mod bath;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gme;
pub mod heom;
pub mod hierarchy;
pub mod matrix;
pub mod modes;
pub mod niba;
pub mod output;
pub mod perturbative;
pub mod quadrature;

pub use error::{Error, Result};
