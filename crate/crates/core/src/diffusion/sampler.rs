use rand::Rng;
use rand_distr::StandardNormal;

use super::schedule::NoiseSchedule;
use super::score::ScoreModel;
use crate::error::{Error, Result};
use crate::kinetics::{Channel, ParametricImage};
use crate::volume::{Dims, Volume3D};

/// Volume of independent standard normal draws, in storage order.
pub fn standard_normal<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Volume3D {
    let n = dims[0] * dims[1] * dims[2];
    let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Volume3D::from_vec(dims, data).expect("normal draws are finite")
}

/// `x_t = √ᾱ_t x_0 + √(1 − ᾱ_t) ε`.
pub fn forward_sample(
    x0: &Volume3D,
    t: usize,
    eps: &Volume3D,
    sched: &NoiseSchedule,
) -> Result<Volume3D> {
    sched.check_step(t)?;
    x0.check_same_shape(eps, "forward_sample noise")?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.zip_map(eps, |x, e| a * x + b * e))
}

/// Coefficients of `μ̃_t = c0 x_0 + ct x_t` and the variance `β̃_t`.
pub fn posterior_coefficients(t: usize, sched: &NoiseSchedule) -> Result<(f64, f64, f64)> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let ab_prev = sched.alpha_bar(t - 1);
    let beta = sched.beta(t);
    let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
    let ct = sched.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    Ok((c0, ct, sched.beta_tilde(t)))
}

/// Mean and variance of `q(x_{t−1} | x_t, x_0)`.
pub fn posterior_params(
    x0: &Volume3D,
    x_t: &Volume3D,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<(Volume3D, f64)> {
    x0.check_same_shape(x_t, "posterior_params")?;
    let (c0, ct, var) = posterior_coefficients(t, sched)?;
    Ok((x0.zip_map(x_t, |a, b| c0 * a + ct * b), var))
}

/// Noise-free part of the reverse update,
/// `(x_t − β_t / √(1 − ᾱ_t) · ε̂) / √α_t`.
pub fn reverse_mean(x_t: &Volume3D, eps_hat: &Volume3D, t: usize, sched: &NoiseSchedule) -> Volume3D {
    let k = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let inv = 1.0 / sched.alpha(t).sqrt();
    x_t.zip_map(eps_hat, |x, e| (x - k * e) * inv)
}

/// One ancestral step `x_t → x_{t−1}` with `σ_t = √β̃_t`. `z` is ignored at
/// `t = 1`.
pub fn reverse_step(
    x_t: &Volume3D,
    t: usize,
    score: &dyn ScoreModel,
    channel: Channel,
    z: &Volume3D,
    sched: &NoiseSchedule,
) -> Result<Volume3D> {
    sched.check_step(t)?;
    x_t.check_same_shape(z, "reverse_step noise")?;
    let eps = checked_eps(score, x_t, t, channel, sched)?;
    let mut out = reverse_mean(x_t, &eps, t, sched);
    if t > 1 {
        out.axpy(sched.sigma(t), z);
    }
    Ok(out)
}

pub(crate) fn checked_eps(
    score: &dyn ScoreModel,
    x_t: &Volume3D,
    t: usize,
    channel: Channel,
    sched: &NoiseSchedule,
) -> Result<Volume3D> {
    let eps = score.epsilon_hat(x_t, t, channel, sched)?;
    if eps.dims() != x_t.dims() || !eps.is_finite() {
        return Err(Error::Score { step: t });
    }
    Ok(eps)
}

/// Draws `x_T` for both channels, kappa first.
pub(crate) fn initial_noise<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> ParametricImage {
    let kappa = standard_normal(dims, rng);
    let b = standard_normal(dims, rng);
    ParametricImage { kappa, b }
}

/// Unconditional sample from the full reverse chain `T → 0`.
pub fn sample_prior<R: Rng + ?Sized>(
    dims: Dims,
    score: &dyn ScoreModel,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<ParametricImage> {
    let mut x = initial_noise(dims, rng);
    for t in (1..=sched.steps()).rev() {
        let mut next = ParametricImage::zeros(dims);
        for c in Channel::ALL {
            let z = if t > 1 {
                standard_normal(dims, rng)
            } else {
                Volume3D::zeros(dims)
            };
            *next.channel_mut(c) = reverse_step(x.channel(c), t, score, c, &z, sched)?;
        }
        x = next;
    }
    Ok(x)
}
