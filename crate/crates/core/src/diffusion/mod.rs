//! DDPM machinery: variance schedule, forward noising, ancestral reverse
//! steps, and the score models that drive them.

mod sampler;
mod scaling;
mod schedule;
mod score;

pub use sampler::{
    forward_sample, posterior_coefficients, posterior_params, reverse_mean, reverse_step,
    sample_prior, standard_normal,
};
pub use scaling::{ChannelScaling, ROBUST_PERCENTILE};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleConfig};
pub use score::{exact_gaussian_eps, DenoiserScore, GaussianPriorScore, PriorMean, ScoreModel};

pub(crate) use sampler::{checked_eps, initial_noise};
