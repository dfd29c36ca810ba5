//! Numerical machinery for comparing the Wright-Fisher chain with its
//! Dirichlet limit by Stein's method: the chain and its generator, the
//! Dirichlet law and diffusion generator, a C³ Hermite lattice interpolator,
//! closed-form conditional moments, the discrete Stein equation, and
//! experiment drivers.

pub mod dirichlet;
pub mod error;
pub mod experiments;
pub mod interp;
pub mod kernel;
pub mod lattice;
pub mod moments;
pub mod special;
pub mod stein;

pub use error::{Error, Result};
pub use kernel::{stationary_distribution, StationaryDistribution, TransitionKernel};
pub use lattice::{GridFunction, LatticeFn, LatticeState, ModelParams, SimplexLattice};
