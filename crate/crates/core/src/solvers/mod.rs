//! Patlak estimators: least squares, the multiplicative baseline fit,
//! diffusion posterior sampling, and RED-Diff with half-quadratic splitting.

mod adam;
mod config;
mod dps;
mod fit;
mod hqs;
mod red;
mod trace;

pub use adam::Adam;
pub use config::{AdamConfig, SolverConfig};
pub use dps::{dps_sample, dps_sigma2_floor, DpsConfig};
pub use fit::{
    baseline_fit, data_fidelity, estimate_sigma2, likelihood_grad, ls_fit, mm_update, DataTerm,
    BACKGROUND_QUANTILE, POSITIVITY_FLOOR,
};
pub use hqs::{hqs_solve, hqs_solve_from, hqs_solve_patched};
pub use red::{red_diff_loss, RedDiffLoss};
pub use trace::{IterationRecord, SolveTrace};
