//! Blood input functions. All times here are in minutes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tri-exponential input model with a linear rise (Feng et al. form):
///
/// `C_p(t) = (A1 s - A2 - A3) e^{λ1 s} + A2 e^{λ2 s} + A3 e^{λ3 s}`, `s = t - t0`,
/// and `C_p(t) = 0` before the delay `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FengParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub delay: f64,
}

impl Default for FengParams {
    /// Standard FDG parameters (activity units per mL, rates in 1/min).
    fn default() -> Self {
        Self {
            a1: 851.1225,
            a2: 21.8798,
            a3: 20.8113,
            lambda1: -4.1339,
            lambda2: -0.1191,
            lambda3: -0.0104,
            delay: 0.7324,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum InputFunction {
    Feng(FengParams),
    /// Piecewise-linear samples `(t_min, C_p)`; zero before the first sample,
    /// held constant after the last.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl Default for InputFunction {
    fn default() -> Self {
        InputFunction::Feng(FengParams::default())
    }
}

impl InputFunction {
    pub fn feng(params: FengParams) -> Result<Self> {
        let f = InputFunction::Feng(params);
        f.validate()?;
        Ok(f)
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let f = InputFunction::Tabulated { times, values };
        f.validate()?;
        Ok(f)
    }

    /// Constant `C_p = c` from `t = 0`.
    pub fn constant(c: f64) -> Self {
        InputFunction::Tabulated {
            times: vec![0.0],
            values: vec![c],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputFunction::Feng(p) => {
                if [p.lambda1, p.lambda2, p.lambda3].iter().any(|&l| !(l < 0.0)) {
                    return Err(Error::Config("Feng decay rates must be negative".into()));
                }
                if [p.a1, p.a2, p.a3].iter().any(|&a| !(a >= 0.0)) || !(p.delay >= 0.0) {
                    return Err(Error::Config(
                        "Feng amplitudes and delay must be nonnegative".into(),
                    ));
                }
            }
            InputFunction::Tabulated { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Config(
                        "tabulated input needs matching, nonempty time and value lists".into(),
                    ));
                }
                if times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config(
                        "tabulated times must be nonnegative and strictly increasing".into(),
                    ));
                }
                if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(Error::Config("tabulated values must be finite and >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Time after which `C_p` may be nonzero.
    pub fn onset(&self) -> f64 {
        match self {
            InputFunction::Feng(p) => p.delay,
            InputFunction::Tabulated { times, .. } => times[0],
        }
    }

    /// Interior points where `C_p` is not smooth.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        match self {
            InputFunction::Feng(p) => vec![p.delay],
            InputFunction::Tabulated { times, .. } => times.clone(),
        }
    }

    /// `C_p(t)`.
    pub fn value(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.value_unchecked(t))
    }

    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        match self {
            InputFunction::Feng(p) => {
                if t < p.delay {
                    return 0.0;
                }
                let s = t - p.delay;
                (p.a1 * s - p.a2 - p.a3) * (p.lambda1 * s).exp()
                    + p.a2 * (p.lambda2 * s).exp()
                    + p.a3 * (p.lambda3 * s).exp()
            }
            InputFunction::Tabulated { times, values } => {
                if t < times[0] {
                    return 0.0;
                }
                let k = times.partition_point(|&ti| ti <= t);
                if k >= times.len() {
                    return values[values.len() - 1];
                }
                let (t0, t1) = (times[k - 1], times[k]);
                let (c0, c1) = (values[k - 1], values[k]);
                c0 + (c1 - c0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// `∫_0^t C_p(τ) dτ`, evaluated in closed form.
    pub fn integral(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.integral_unchecked(t))
    }

    pub(crate) fn integral_unchecked(&self, t: f64) -> f64 {
        match self {
            InputFunction::Feng(p) => {
                if t <= p.delay {
                    return 0.0;
                }
                let s = t - p.delay;
                let l1 = p.lambda1;
                let e1 = (l1 * s).exp();
                let rise = p.a1 * ((s / l1 - 1.0 / (l1 * l1)) * e1 + 1.0 / (l1 * l1));
                let drop = -(p.a2 + p.a3) * (e1 - 1.0) / l1;
                let tail = |a: f64, l: f64| a * ((l * s).exp() - 1.0) / l;
                rise + drop + tail(p.a2, p.lambda2) + tail(p.a3, p.lambda3)
            }
            InputFunction::Tabulated { times, values } => {
                if t <= times[0] {
                    return 0.0;
                }
                let mut acc = 0.0;
                for k in 1..times.len() {
                    let (t0, t1) = (times[k - 1], times[k]);
                    if t <= t0 {
                        return acc;
                    }
                    let hi = t.min(t1);
                    let c_hi = values[k - 1] + (values[k] - values[k - 1]) * (hi - t0) / (t1 - t0);
                    acc += 0.5 * (values[k - 1] + c_hi) * (hi - t0);
                    if t <= t1 {
                        return acc;
                    }
                }
                acc + values[values.len() - 1] * (t - times[times.len() - 1])
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("input function evaluated at t = {t}")))
    }
}
