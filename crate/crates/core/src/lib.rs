//! Simulation of jump-diffusion SDEs in (truncated) Hilbert spaces and of
//! mild SPDE solutions obtained from them through a semigroup dilation.

pub mod batch;
pub mod conditions;
pub mod error;
pub mod experiment;
pub mod expm;
pub mod hilbert;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod spde;
pub mod vector;

pub use error::{Error, Result};
pub use vector::StateVector;
