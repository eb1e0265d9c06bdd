//! Random Hierarchy Model: generation, exact belief-propagation denoising,
//! mean-field theory, a Gaussian-mixture diffusion baseline and seeded sweeps.

pub mod bp;
pub mod error;
pub mod format;
pub mod gaussian;
pub mod harness;
pub mod meanfield;
pub mod noise;
pub mod rhm;
pub mod seed;

pub use error::{Error, Result};
