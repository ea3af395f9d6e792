use std::sync::Arc;

use super::schedule::NoiseSchedule;
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::kinetics::Channel;
use crate::volume::Volume3D;

/// Noise predictor `ε̂(x_t, t)`, evaluated one channel at a time.
///
/// Implementations must be shape-preserving and safe to call concurrently
/// on disjoint patches.
pub trait ScoreModel: Send + Sync {
    fn epsilon_hat(
        &self,
        x_t: &Volume3D,
        t: usize,
        channel: Channel,
        sched: &NoiseSchedule,
    ) -> Result<Volume3D>;
}

/// Prior mean, either one value for every voxel or a full field.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorMean {
    Scalar(f64),
    Field(Volume3D),
}

impl PriorMean {
    fn at(&self, i: usize) -> f64 {
        match self {
            PriorMean::Scalar(v) => *v,
            PriorMean::Field(f) => f.data()[i],
        }
    }

    fn check(&self, dims: crate::volume::Dims) -> Result<()> {
        match self {
            PriorMean::Field(f) if f.dims() != dims => Err(Error::Shape(format!(
                "prior mean dims {:?} vs input {:?}",
                f.dims(),
                dims
            ))),
            _ => Ok(()),
        }
    }
}

impl From<f64> for PriorMean {
    fn from(v: f64) -> Self {
        PriorMean::Scalar(v)
    }
}

/// `ε̂ = √(1−ᾱ_t) (x_t − √ᾱ_t μ0) / (ᾱ_t s2 + 1 − ᾱ_t)`, the exact noise
/// predictor when `x_0 ~ N(μ0, s2 I)`.
pub fn exact_gaussian_eps(
    x_t: &Volume3D,
    t: usize,
    mu0: &PriorMean,
    s2: f64,
    sched: &NoiseSchedule,
) -> Result<Volume3D> {
    sched.check_step(t)?;
    mu0.check(x_t.dims())?;
    if !(s2 >= 0.0) {
        return Err(Error::Domain(format!("prior variance {s2} is negative")));
    }
    let ab = sched.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let denom = ab * s2 + 1.0 - ab;
    let mut out = x_t.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = sn * (*v - sa * mu0.at(i)) / denom;
    }
    Ok(out)
}

/// Exact score of an independent Gaussian prior per channel.
#[derive(Debug, Clone)]
pub struct GaussianPriorScore {
    pub mu0: [PriorMean; 2],
    pub s2: [f64; 2],
}

impl GaussianPriorScore {
    pub fn new(mu0: [PriorMean; 2], s2: [f64; 2]) -> Result<Self> {
        if s2.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("prior variance must be non-negative".into()));
        }
        Ok(Self { mu0, s2 })
    }

    /// Same scalar prior on both channels.
    pub fn isotropic(mu0: f64, s2: f64) -> Result<Self> {
        Self::new([mu0.into(), mu0.into()], [s2, s2])
    }
}

impl ScoreModel for GaussianPriorScore {
    fn epsilon_hat(
        &self,
        x_t: &Volume3D,
        t: usize,
        channel: Channel,
        sched: &NoiseSchedule,
    ) -> Result<Volume3D> {
        let c = channel.index();
        exact_gaussian_eps(x_t, t, &self.mu0[c], self.s2[c], sched)
    }
}

/// Score from a plug-in denoiser via Tweedie's formula:
/// `ε̂ = (x_t − √ᾱ_t D(x_t / √ᾱ_t)) / √(1 − ᾱ_t)`, with `D` told that its
/// input carries noise of standard deviation `√((1 − ᾱ_t) / ᾱ_t)`.
#[derive(Clone)]
pub struct DenoiserScore {
    denoisers: [Arc<dyn Denoiser>; 2],
}

impl DenoiserScore {
    /// One denoiser shared by both channels.
    pub fn new(denoiser: Arc<dyn Denoiser>) -> Self {
        Self {
            denoisers: [denoiser.clone(), denoiser],
        }
    }

    pub fn per_channel(kappa: Arc<dyn Denoiser>, b: Arc<dyn Denoiser>) -> Self {
        Self {
            denoisers: [kappa, b],
        }
    }

    pub fn denoiser(&self, channel: Channel) -> &dyn Denoiser {
        self.denoisers[channel.index()].as_ref()
    }
}

impl std::fmt::Debug for DenoiserScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenoiserScore").finish_non_exhaustive()
    }
}

impl ScoreModel for DenoiserScore {
    fn epsilon_hat(
        &self,
        x_t: &Volume3D,
        t: usize,
        channel: Channel,
        sched: &NoiseSchedule,
    ) -> Result<Volume3D> {
        sched.check_step(t)?;
        let ab = sched.alpha_bar(t);
        let sa = ab.sqrt();
        let sn = (1.0 - ab).sqrt();
        let scaled = x_t.map(|v| v / sa);
        let d = self.denoiser(channel).denoise(&scaled, Some(sn / sa));
        Ok(x_t.zip_map(&d, |x, dv| (x - sa * dv) / sn))
    }
}
