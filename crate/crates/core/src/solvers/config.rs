use serde::{Deserialize, Serialize};

use crate::diffusion::ScheduleConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Settings for the baseline fit, the diffusion sampler and the HQS solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// HQS penalty `λ`.
    pub lambda: f64,
    /// Outer HQS iterations.
    pub max_it: usize,
    /// Multiplicative data-consistency updates per outer iteration.
    pub sub_it1: usize,
    /// Diffusion steps per outer iteration.
    pub sub_it2: usize,
    pub adam: AdamConfig,
    /// Likelihood noise variance; `None` estimates it from the background
    /// of the last frame.
    pub sigma2: Option<f64>,
    /// Smoothing applied to the baseline fit used as initializer.
    pub init_fwhm_voxels: f64,
    /// Multiplicative updates of the baseline fit.
    pub baseline_iters: usize,
    /// Largest diffusion step of the HQS grid as a fraction of `T`.
    pub t_start_fraction: f64,
    /// Run the score on per-channel robust-max normalized images.
    pub normalize: bool,
    /// Iterates with RMS above this abort with a divergence error.
    pub divergence_limit: f64,
    pub schedule: ScheduleConfig,
}

impl Default for SolverConfig {
    /// λ = 0.2, 20 outer iterations of 5 data updates and 10 diffusion
    /// steps, ADAM learning rate 0.01.
    fn default() -> Self {
        Self {
            lambda: 0.2,
            max_it: 20,
            sub_it1: 5,
            sub_it2: 10,
            adam: AdamConfig::default(),
            sigma2: None,
            init_fwhm_voxels: 3.0,
            baseline_iters: 100,
            t_start_fraction: 0.3,
            normalize: true,
            divergence_limit: 1e6,
            schedule: ScheduleConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be finite and non-negative");
        }
        if self.max_it == 0 || self.sub_it1 == 0 || self.sub_it2 == 0 {
            return fail("iteration counts must be at least 1");
        }
        if !(self.adam.lr > 0.0) || !(self.adam.eps > 0.0) {
            return fail("ADAM learning rate and epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return fail("ADAM betas must lie in [0, 1)");
        }
        if let Some(s) = self.sigma2 {
            if !(s > 0.0) {
                return fail("sigma2 must be positive");
            }
        }
        if !(self.t_start_fraction > 0.0 && self.t_start_fraction <= 1.0) {
            return fail("t_start_fraction must lie in (0, 1]");
        }
        if !(self.init_fwhm_voxels >= 0.0) {
            return fail("init_fwhm_voxels must be non-negative");
        }
        if !(self.divergence_limit > 0.0) {
            return fail("divergence_limit must be positive");
        }
        self.schedule.build().map(|_| ())
    }

    /// Largest diffusion step of the HQS grid for a schedule of `steps`.
    pub fn t_start(&self, steps: usize) -> usize {
        ((self.t_start_fraction * steps as f64).round() as usize).clamp(1, steps.max(1))
    }
}
