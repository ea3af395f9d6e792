//! The Patlak forward operator `A = B ⊗ I_J` and its adjoint, applied
//! voxel-wise without forming `A`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{InputFunction, PatlakBasis};
use crate::volume::{Dims, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Kappa,
    Intercept,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Kappa, Channel::Intercept];

    pub fn index(self) -> usize {
        match self {
            Channel::Kappa => 0,
            Channel::Intercept => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Kappa => "kappa",
            Channel::Intercept => "b",
        }
    }
}

/// Slope and intercept images, the stacked unknown `x = [κ; b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricImage {
    pub kappa: Volume3D,
    pub b: Volume3D,
}

impl ParametricImage {
    pub fn new(kappa: Volume3D, b: Volume3D) -> Result<Self> {
        kappa.check_same_shape(&b, "parametric channels")?;
        Ok(Self { kappa, b })
    }

    pub fn filled(dims: Dims, kappa: f64, b: f64) -> Self {
        Self {
            kappa: Volume3D::filled(dims, kappa),
            b: Volume3D::filled(dims, b),
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::filled(dims, 0.0, 0.0)
    }

    pub fn dims(&self) -> Dims {
        self.kappa.dims()
    }

    pub fn channel(&self, c: Channel) -> &Volume3D {
        match c {
            Channel::Kappa => &self.kappa,
            Channel::Intercept => &self.b,
        }
    }

    pub fn channel_mut(&mut self, c: Channel) -> &mut Volume3D {
        match c {
            Channel::Kappa => &mut self.kappa,
            Channel::Intercept => &mut self.b,
        }
    }

    pub fn map_channels(&self, mut f: impl FnMut(Channel, &Volume3D) -> Volume3D) -> Self {
        Self {
            kappa: f(Channel::Kappa, &self.kappa),
            b: f(Channel::Intercept, &self.b),
        }
    }

    pub fn try_map_channels(
        &self,
        mut f: impl FnMut(Channel, &Volume3D) -> Result<Volume3D>,
    ) -> Result<Self> {
        Ok(Self {
            kappa: f(Channel::Kappa, &self.kappa)?,
            b: f(Channel::Intercept, &self.b)?,
        })
    }

    pub fn check_dims(&self, dims: Dims, what: &str) -> Result<()> {
        if self.dims() == dims {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: parametric dims {:?} vs {:?}",
                self.dims(),
                dims
            )))
        }
    }

    /// `⟨self, other⟩` over both channels.
    pub fn dot(&self, other: &ParametricImage) -> f64 {
        self.kappa.dot(&other.kappa) + self.b.dot(&other.b)
    }

    pub fn norm_sq(&self) -> f64 {
        self.kappa.norm_sq() + self.b.norm_sq()
    }

    pub fn axpy(&mut self, alpha: f64, other: &ParametricImage) {
        self.kappa.axpy(alpha, &other.kappa);
        self.b.axpy(alpha, &other.b);
    }

    pub fn scale(&mut self, factor: f64) {
        self.kappa.scale(factor);
        self.b.scale(factor);
    }

    pub fn is_finite(&self) -> bool {
        self.kappa.is_finite() && self.b.is_finite()
    }
}

/// `c(t) = κ ∫_0^t C_p + b C_p(t)`, `t` in minutes.
pub fn tracer_concentration(
    x: &ParametricImage,
    input: &InputFunction,
    t_min: f64,
    t_star_min: f64,
) -> Result<Volume3D> {
    if !(t_min > t_star_min) {
        return Err(Error::SteadyState(format!(
            "t = {t_min} min is not after t* = {t_star_min} min"
        )));
    }
    let cum = input.integral(t_min)?;
    let cp = input.value(t_min)?;
    Ok(x.kappa.zip_map(&x.b, |k, b| k * cum + b * cp))
}

/// Noise-free frames `ȳ_m = S̄_p(m) κ + C̄_p(m) b`.
pub fn forward_project(x: &ParametricImage, basis: &PatlakBasis) -> Vec<Volume3D> {
    basis
        .rows()
        .iter()
        .map(|&[s, c]| x.kappa.zip_map(&x.b, |k, b| s * k + c * b))
        .collect()
}

/// `Aᵀ y`: channels `Σ_m S̄_p(m) y_m` and `Σ_m C̄_p(m) y_m`, accumulated in
/// frame order.
pub fn adjoint_project(frames: &[Volume3D], basis: &PatlakBasis) -> Result<ParametricImage> {
    if frames.len() != basis.len() {
        return Err(Error::Shape(format!(
            "{} frames for a {}-row basis",
            frames.len(),
            basis.len()
        )));
    }
    let dims = frames[0].dims();
    if let Some(f) = frames.iter().find(|f| f.dims() != dims) {
        return Err(Error::Shape(format!(
            "frame dims {:?} differ from {:?}",
            f.dims(),
            dims
        )));
    }
    let mut out = ParametricImage::zeros(dims);
    for (frame, &[s, c]) in frames.iter().zip(basis.rows()) {
        out.kappa.axpy(s, frame);
        out.b.axpy(c, frame);
    }
    Ok(out)
}
