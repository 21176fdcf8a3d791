//! Low-rank WaveHoltz solvers for the Helmholtz equation.
//!
//! Two-dimensional grid functions are kept as truncated SVDs
//! ([`lowrank::LowRankMatrix`]), three-dimensional ones as tensor trains
//! ([`tt::TensorTrain`]). Spatial operators are summation-by-parts finite
//! differences with SAT boundary and interface terms on Cartesian multiblock
//! domains; implicit nonreflecting terms in 2D are solved exactly in factored
//! form ([`fadi`]). The outer WaveHoltz fixed-point iteration
//! ([`waveholtz`]) can be accelerated with low-rank Anderson acceleration
//! ([`lraa`]). Dense reference implementations live in [`oracle`].

pub mod domain;
pub mod error;
pub mod fadi;
pub mod lowrank;
pub mod lraa;
pub mod oracle;
pub mod sbp;
pub mod tt;
pub mod wave2d;
pub mod wave3d;
pub mod waveholtz;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
