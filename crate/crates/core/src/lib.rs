//! Delayed-acceptance and pseudo-marginal random-walk Metropolis samplers,
//! their high-dimensional efficiency theory, and the simulation studies
//! built on top of them.

pub mod diagnostics;
pub mod error;
pub mod heat;
pub mod kernels;
pub mod mjp;
pub mod optim;
pub mod parallel;
pub mod product;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod theory;
pub mod tuner;

pub use error::{Error, Result};
