use super::hqs::check_divergence;
use crate::diffusion::{
    checked_eps, initial_noise, reverse_mean, standard_normal, ChannelScaling, NoiseSchedule, ScoreModel,
};
use crate::error::{Error, Result};
use crate::kinetics::{adjoint_project, forward_project, Channel, ParametricImage, PatlakBasis};
use crate::rng::stream_rng;
use crate::series::DynamicSeries;
use crate::volume::Volume3D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpsConfig {
    /// Likelihood noise variance `σ²`. `f64::INFINITY` disables the data term.
    pub sigma2: f64,
    /// Working-space scaling of the sampled image.
    pub scaling: ChannelScaling,
    /// Raise `σ²` so that no step overshoots the data term's curvature.
    pub stability_floor: bool,
    pub divergence_limit: f64,
}

impl DpsConfig {
    pub fn new(sigma2: f64) -> Self {
        Self {
            sigma2,
            scaling: ChannelScaling::identity(),
            stability_floor: true,
            divergence_limit: 1e6,
        }
    }
}

fn scaled_basis(basis: &PatlakBasis, scaling: &ChannelScaling) -> Result<PatlakBasis> {
    let [sk, sb] = scaling.scale;
    let rows = basis.rows().iter().map(|&[s, c]| [s * sk, c * sb]).collect();
    PatlakBasis::from_rows(rows, basis.t_star_min())
}

fn largest_eigenvalue(g: [[f64; 2]; 2]) -> f64 {
    let half_tr = 0.5 * (g[0][0] + g[1][1]);
    let half_gap = 0.5 * (g[0][0] - g[1][1]);
    half_tr + (half_gap * half_gap + g[0][1] * g[1][0]).sqrt()
}

/// Smallest `σ²` for which every step `(σ_t² / σ²) · 2AᵀA` of the sampler
/// is a contraction, `2 · max_t σ_t² · λ_max(AᵀA)`.
pub fn dps_sigma2_floor(basis: &PatlakBasis, sched: &NoiseSchedule) -> f64 {
    let max_var = (1..=sched.steps()).map(|t| sched.beta_tilde(t)).fold(0.0, f64::max);
    2.0 * max_var * largest_eigenvalue(basis.gram())
}

/// Diffusion posterior sampling: the full reverse chain with a gradient
/// step `−(σ_t² / σ²) ∇‖y − A x_t‖²` after every ancestral update.
///
/// Draws from stream 0 of `seed` in the same order as
/// [`crate::diffusion::sample_prior`], so with the data term disabled both
/// produce identical samples.
pub fn dps_sample(
    series: &DynamicSeries,
    basis: &PatlakBasis,
    score: &dyn ScoreModel,
    sched: &NoiseSchedule,
    cfg: &DpsConfig,
    seed: u64,
) -> Result<ParametricImage> {
    if !(cfg.sigma2 > 0.0) {
        return Err(Error::Config(format!("noise variance {} must be positive", cfg.sigma2)));
    }
    if series.len() != basis.len() {
        return Err(Error::Shape(format!(
            "{} frames for a {}-row basis",
            series.len(),
            basis.len()
        )));
    }
    let dims = series.dims();
    let work_basis = scaled_basis(basis, &cfg.scaling)?;
    let mut sigma2 = cfg.sigma2;
    if cfg.stability_floor && sigma2.is_finite() {
        let floor = dps_sigma2_floor(&work_basis, sched);
        if sigma2 < floor {
            log::warn!("DPS: raising sigma2 from {sigma2:e} to the stability floor {floor:e}");
            sigma2 = floor;
        }
    }

    let mut rng = stream_rng(seed, 0);
    let mut x = initial_noise(dims, &mut rng);
    for t in (1..=sched.steps()).rev() {
        let coef = 2.0 * sched.beta_tilde(t) / sigma2;
        let grad = if coef != 0.0 {
            let mut resid = forward_project(&x, &work_basis);
            for (r, y) in resid.iter_mut().zip(series.frames()) {
                r.axpy(-1.0, y);
            }
            Some(adjoint_project(&resid, &work_basis)?)
        } else {
            None
        };
        let mut next = ParametricImage::zeros(dims);
        for c in Channel::ALL {
            let z = if t > 1 {
                standard_normal(dims, &mut rng)
            } else {
                Volume3D::zeros(dims)
            };
            let eps = checked_eps(score, x.channel(c), t, c, sched)?;
            let mut out = reverse_mean(x.channel(c), &eps, t, sched);
            if let Some(g) = &grad {
                out.axpy(-coef, g.channel(c));
            }
            if t > 1 {
                out.axpy(sched.sigma(t), &z);
            }
            *next.channel_mut(c) = out;
        }
        x = next;
        check_divergence(&x, sched.steps() + 1 - t, cfg.divergence_limit)?;
    }
    Ok(cfg.scaling.denormalize(&x))
}
