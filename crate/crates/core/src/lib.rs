//! Patlak parametric image estimation from dynamic PET frames, with
//! diffusion-model priors plugged in by posterior sampling or by RED-Diff
//! under half-quadratic splitting.

// `!(x > 0.0)` style checks reject NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoise;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod kinetics;
pub mod metrics;
pub mod patch;
pub mod phantom;
pub mod quadrature;
pub mod rng;
pub mod series;
pub mod solvers;
pub mod volume;

pub use error::{Error, Result};
pub use kinetics::{Channel, ParametricImage};
pub use series::DynamicSeries;
pub use volume::Volume3D;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
