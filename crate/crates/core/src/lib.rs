//! Spectral simulation of the stochastic Allen-Cahn equation with mobility
//! and colored noise on the torus, together with numerical checks of the
//! estimates its well-posedness theory relies on.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod field;
pub mod inequalities;
pub mod model;
pub mod noise;
mod quadrature;
pub mod rng;
pub mod scheme;
pub mod semigroup;

pub use error::{Error, Result};
pub use field::{Sobolev, SpectralField};
pub use model::{Mobility, Model, NoiseKernel, Potential, TruncatedPotential};
pub use noise::{ModeTable, NoisePath};
pub use quadrature::integrate;
pub use scheme::{Scheme, SchemeConfig, SchemeState, TrajectoryRecord};
