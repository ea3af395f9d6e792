use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{FrameTiming, InputFunction};
use crate::quadrature::adaptive_simpson;

pub const BASIS_REL_TOL: f64 = 1e-8;

/// Default steady-state time in minutes.
pub const DEFAULT_T_STAR_MIN: f64 = 20.0;

/// Temporal basis `B` (M×2): row `m` holds the frame integrals
/// `(S̄_p(m), C̄_p(m))` of the cumulative input and the input itself.
///
/// Frame integrals use minutes, so the slope channel is in 1/min.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatlakBasis {
    rows: Vec<[f64; 2]>,
    t_star_min: f64,
}

impl PatlakBasis {
    /// Wraps an explicit basis matrix.
    pub fn from_rows(rows: Vec<[f64; 2]>, t_star_min: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape("basis has no frames".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("basis contains non-finite entries".into()));
        }
        Ok(Self { rows, t_star_min })
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn t_star_min(&self) -> f64 {
        self.t_star_min
    }

    /// `BᵀB`.
    pub fn gram(&self) -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for r in &self.rows {
            g[0][0] += r[0] * r[0];
            g[0][1] += r[0] * r[1];
            g[1][1] += r[1] * r[1];
        }
        g[1][0] = g[0][1];
        g
    }

    /// Cosine of the angle between the two basis columns.
    pub fn column_cosine(&self) -> f64 {
        let g = self.gram();
        g[0][1] / (g[0][0] * g[1][1]).sqrt()
    }
}

/// Computes the Patlak basis for `timing` by adaptive quadrature.
///
/// Frame times are converted from seconds to minutes here, once.
pub fn patlak_basis(
    input: &InputFunction,
    timing: &FrameTiming,
    t_star_min: f64,
) -> Result<PatlakBasis> {
    input.validate()?;
    let breaks = input.breakpoints();
    let mut rows = Vec::with_capacity(timing.len());
    for (m, frame) in timing.frames().iter().enumerate() {
        let a = frame.start_s / 60.0;
        let b = frame.end_s / 60.0;
        if a < t_star_min {
            return Err(Error::SteadyState(format!(
                "frame {m} starts at {a:.3} min, before t* = {t_star_min} min"
            )));
        }
        let s = piecewise(&|t| input.integral_unchecked(t), a, b, &breaks);
        let c = piecewise(&|t| input.value_unchecked(t), a, b, &breaks);
        if !(s > 0.0 && c > 0.0) {
            return Err(Error::SingularBasis(format!(
                "frame {m}: basis entries ({s}, {c}) must be positive"
            )));
        }
        rows.push([s, c]);
    }
    PatlakBasis::from_rows(rows, t_star_min)
}

fn piecewise(f: &impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut knots = vec![a];
    knots.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    knots.push(b);
    knots
        .windows(2)
        .map(|w| adaptive_simpson(f, w[0], w[1], BASIS_REL_TOL))
        .sum()
}
