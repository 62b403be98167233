//! Mixed-strategy robust optimization of an unknown function `f(x, θ)` from
//! noisy evaluations, using Gaussian-process confidence bounds and a simulated
//! multiplicative-weights adversary over the finite parameter set `Θ`.

pub mod algorithms;
pub mod benchmarks;
pub mod domain;
pub mod error;
pub mod gp;
pub mod kernels;

pub use error::{Error, Result};
