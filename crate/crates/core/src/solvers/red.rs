use crate::diffusion::{checked_eps, NoiseSchedule, ScoreModel};
use crate::error::Result;
use crate::kinetics::{Channel, ParametricImage};

/// Value and `v`-gradient of the RED-Diff loss at one diffusion step.
#[derive(Debug, Clone)]
pub struct RedDiffLoss {
    /// `λ/2 ‖x − v‖² + ω_t ⟨ε̂ − ε, v⟩`.
    pub value: f64,
    /// The second term of `value` alone.
    pub red: f64,
    /// `λ (v − x) + ω_t (ε̂ − ε)`.
    pub grad: ParametricImage,
}

/// RED-Diff loss with the score residual held fixed.
///
/// `ε̂` is evaluated at `√ᾱ_t v + √(1 − ᾱ_t) ε` and treated as a constant,
/// so the loss is quadratic in `v`. `ω_t = √(1 − ᾱ_t) / √ᾱ_t`.
pub fn red_diff_loss(
    x: &ParametricImage,
    v: &ParametricImage,
    t: usize,
    eps: &ParametricImage,
    score: &dyn ScoreModel,
    lambda: f64,
    sched: &NoiseSchedule,
) -> Result<RedDiffLoss> {
    sched.check_step(t)?;
    v.check_dims(x.dims(), "red_diff_loss v")?;
    eps.check_dims(x.dims(), "red_diff_loss eps")?;
    let ab = sched.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let omega = sched.tau(t);
    let mut grad = ParametricImage::zeros(x.dims());
    let mut red = 0.0;
    let mut quad = 0.0;
    for c in Channel::ALL {
        let (vc, xc, ec) = (v.channel(c), x.channel(c), eps.channel(c));
        let scaled = vc.zip_map(ec, |a, e| sa * a + sn * e);
        let eps_hat = checked_eps(score, &scaled, t, c, sched)?;
        let g = grad.channel_mut(c).data_mut();
        for i in 0..g.len() {
            let r = eps_hat.data()[i] - ec.data()[i];
            let d = vc.data()[i] - xc.data()[i];
            red += omega * r * vc.data()[i];
            quad += d * d;
            g[i] = lambda * d + omega * r;
        }
    }
    Ok(RedDiffLoss {
        value: 0.5 * lambda * quad + red,
        red,
        grad,
    })
}
