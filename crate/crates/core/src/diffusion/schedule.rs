use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable schedule description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps, self.beta_start, self.beta_end)
    }
}

/// Variance schedule of a DDPM with `T` steps.
///
/// Steps are 1-based: `beta(t)` for `t` in `1..=T`. `alpha_bar(0)` is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    beta_tildes: Vec<f64>,
}

/// Linear schedule: `β` interpolated from `beta_start` to `beta_end` over
/// `steps` steps.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "schedule range requires 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let betas = if steps == 1 {
        vec![beta_start]
    } else {
        let span = beta_end - beta_start;
        (0..steps)
            .map(|i| beta_start + span * i as f64 / (steps - 1) as f64)
            .collect()
    };
    NoiseSchedule::from_betas(betas)
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        let beta_tildes = (0..betas.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bars[i]) * betas[i]
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
            beta_tildes,
        })
    }

    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::Domain(format!(
                "diffusion step {t} outside 1..={}",
                self.steps()
            )))
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Posterior variance `β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t`.
    pub fn beta_tilde(&self, t: usize) -> f64 {
        self.beta_tildes[t - 1]
    }

    /// Reverse-step noise scale `σ_t = sqrt(β̃_t)`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.beta_tilde(t).sqrt()
    }

    /// `√ᾱ_t / √(1 − ᾱ_t)`.
    pub fn snr(&self, t: usize) -> f64 {
        let ab = self.alpha_bar(t);
        (ab / (1.0 - ab)).sqrt()
    }

    /// Noise-to-signal ratio of the `x_0`-scaled marginal, `√((1 − ᾱ_t) / ᾱ_t)`.
    pub fn tau(&self, t: usize) -> f64 {
        1.0 / self.snr(t)
    }

    /// Shorter schedule visiting `n` evenly spaced steps of this one, with
    /// `β'_i = 1 − ᾱ_{t_i} / ᾱ_{t_{i−1}}` so the cumulative products agree at
    /// the kept steps.
    pub fn respaced(&self, n: usize) -> Result<NoiseSchedule> {
        if n == 0 || n > self.steps() {
            return Err(Error::Config(format!(
                "cannot respace {} steps into {n}",
                self.steps()
            )));
        }
        let kept: Vec<usize> = (1..=n)
            .map(|i| ((i * self.steps()) as f64 / n as f64).round() as usize)
            .collect();
        let mut prev = 1.0;
        let mut betas = Vec::with_capacity(n);
        for &t in &kept {
            let ab = self.alpha_bar(t);
            betas.push(1.0 - ab / prev);
            prev = ab;
        }
        NoiseSchedule::from_betas(betas)
    }

    /// `n` descending steps `round(i · t_start / n)` for `i = n, …, 1`,
    /// clamped to `1..=T`.
    pub fn strided(&self, t_start: usize, n: usize) -> Vec<usize> {
        let top = t_start.clamp(1, self.steps());
        (1..=n)
            .rev()
            .map(|i| {
                let t = (i as f64 * top as f64 / n as f64).round() as usize;
                t.clamp(1, self.steps())
            })
            .collect()
    }
}
