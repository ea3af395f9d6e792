//! Classical denoisers: Gaussian smoothing, non-local means, HYPR.
//!
//! Used as comparison methods and as the inner denoiser of
//! [`crate::diffusion::DenoiserScore`].

mod gaussian;
mod hypr;
mod nlm;

use serde::{Deserialize, Serialize};

pub use gaussian::{box_filter, gaussian_filter, gaussian_kernel, FWHM_TO_SIGMA, MIN_FWHM};
pub use hypr::{composite, hypr_filter, HYPR_DENOM_FLOOR};
pub use nlm::{estimate_noise_sigma, nlm_filter, NlmConfig};

pub(crate) use gaussian::separable_convolve;

use crate::error::{Error, Result};
use crate::volume::Volume3D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianConfig {
    pub fwhm_voxels: f64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self { fwhm_voxels: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyprConfig {
    pub kernel_size: usize,
}

impl Default for HyprConfig {
    fn default() -> Self {
        Self { kernel_size: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub gaussian: GaussianConfig,
    pub nlm: NlmConfig,
    pub hypr: HyprConfig,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian.fwhm_voxels > 0.0) {
            return Err(Error::Config("Gaussian FWHM must be positive".into()));
        }
        self.nlm.validate()?;
        if self.hypr.kernel_size.is_multiple_of(2) {
            return Err(Error::Config("HYPR kernel size must be odd".into()));
        }
        Ok(())
    }
}

/// A single-volume denoiser. `noise_std`, when known, is the standard
/// deviation of the additive noise in `vol`.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, vol: &Volume3D, noise_std: Option<f64>) -> Volume3D;
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianDenoiser {
    pub fwhm_voxels: f64,
}

impl Denoiser for GaussianDenoiser {
    fn denoise(&self, vol: &Volume3D, _noise_std: Option<f64>) -> Volume3D {
        gaussian_filter(vol, self.fwhm_voxels)
    }
}

#[derive(Debug, Clone)]
pub struct NlmDenoiser {
    pub config: NlmConfig,
    pub guide: Option<Volume3D>,
}

impl Denoiser for NlmDenoiser {
    fn denoise(&self, vol: &Volume3D, noise_std: Option<f64>) -> Volume3D {
        let dist = self.guide.as_ref().unwrap_or(vol);
        // a known noise level only describes `vol`, not a separate guide
        let sigma = if self.guide.is_some() { None } else { noise_std };
        let h = self.config.resolve_h(dist, sigma);
        nlm::nlm_with_h(vol, &self.config, dist, h)
    }
}
