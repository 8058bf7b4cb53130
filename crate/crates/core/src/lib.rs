//! Spectral analytics and Monte Carlo verification for critical branching
//! Brownian motion with drift, reflected at 0 and killed at `L`.

pub mod bbm;
pub mod cpp;
pub mod error;
pub mod parallel;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod spine;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;
pub use spectral::{build_basis, ModelParams, SpectralBasis};

pub type Params32 = ModelParams<f32>;
pub type Params64 = ModelParams<f64>;
pub type Basis32 = SpectralBasis<f32>;
pub type Basis64 = SpectralBasis<f64>;

#[cfg(test)]
mod tests;
