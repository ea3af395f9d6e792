//! Continuous-time Patlak model.
//!
//! Kinetic time is measured in minutes: input-function parameters, `t*`, and
//! the basis integrals all use minutes, so slopes come out in 1/min. Frame
//! timing is stored in seconds (matching series manifests) and converted in
//! [`patlak_basis`].

mod basis;
mod input;
mod operator;
mod timing;

pub use basis::{patlak_basis, PatlakBasis, BASIS_REL_TOL, DEFAULT_T_STAR_MIN};
pub use input::{FengParams, InputFunction};
pub use operator::{adjoint_project, forward_project, tracer_concentration, Channel, ParametricImage};
pub use timing::{Frame, FrameTiming};
