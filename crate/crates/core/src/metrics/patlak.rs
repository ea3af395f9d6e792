use crate::error::{Error, Result};
use crate::kinetics::{patlak_basis, FrameTiming, InputFunction};
use crate::series::DynamicSeries;

/// Time-activity curve.
///
/// With `frames` set, `values[m]` is the frame-integrated activity of frame
/// `m` (the quantity the Patlak basis models) and `times_min` holds the frame
/// mid-times. Without it, `values` are instantaneous concentrations sampled
/// at `times_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tac {
    pub times_min: Vec<f64>,
    pub values: Vec<f64>,
    pub frames: Option<FrameTiming>,
}

impl Tac {
    /// Instantaneous samples `c(t_i)`.
    pub fn sampled(times_min: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times_min.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} times for {} values",
                times_min.len(),
                values.len()
            )));
        }
        Ok(Self {
            times_min,
            values,
            frames: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-frame mean of `series` over the voxel indices in `roi`.
pub fn roi_tac(series: &DynamicSeries, roi: &[usize]) -> Result<Tac> {
    if roi.is_empty() {
        return Err(Error::Degenerate("empty ROI".into()));
    }
    let n = series.dims().iter().product::<usize>();
    if let Some(&i) = roi.iter().find(|&&i| i >= n) {
        return Err(Error::Shape(format!("ROI voxel {i} outside a volume of {n}")));
    }
    let values = series
        .frames()
        .iter()
        .map(|f| roi.iter().map(|&i| f.data()[i]).sum::<f64>() / roi.len() as f64)
        .collect();
    let times_min = series.timing().frames().iter().map(|f| f.mid_s() / 60.0).collect();
    Ok(Tac {
        times_min,
        values,
        frames: Some(series.timing().clone()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatlakPlot {
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Patlak graphical analysis of the points after `t_star_min`.
///
/// Sampled TACs use `(∫₀ᵗ C_p / C_p(t), c(t) / C_p(t))`. Frame-integrated
/// TACs use the frame integrals of both quantities, `(S̄ / C̄, y / C̄)`,
/// which stay exactly linear under the Patlak model for any frame length.
pub fn patlak_plot(tac: &Tac, input: &InputFunction, t_star_min: f64) -> Result<PatlakPlot> {
    let (abscissa, ordinate) = match &tac.frames {
        Some(timing) => {
            let keep: Vec<usize> = (0..timing.len())
                .filter(|&m| timing.frames()[m].start_s / 60.0 >= t_star_min)
                .collect();
            if keep.len() < 2 {
                return Err(Error::Degenerate(format!(
                    "{} frames after t* = {t_star_min} min",
                    keep.len()
                )));
            }
            let late = FrameTiming::new(keep.iter().map(|&m| timing.frames()[m]).collect())?;
            let basis = patlak_basis(input, &late, t_star_min)?;
            let xs = basis.rows().iter().map(|r| r[0] / r[1]).collect();
            let ys = keep
                .iter()
                .zip(basis.rows())
                .map(|(&m, r)| tac.values[m] / r[1])
                .collect();
            (xs, ys)
        }
        None => {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (&t, &c) in tac.times_min.iter().zip(&tac.values) {
                if t < t_star_min {
                    continue;
                }
                let cp = input.value(t)?;
                if !(cp > 0.0) {
                    return Err(Error::Domain(format!("input function vanishes at {t} min")));
                }
                xs.push(input.integral(t)? / cp);
                ys.push(c / cp);
            }
            if xs.len() < 2 {
                return Err(Error::Degenerate(format!("{} samples after t* = {t_star_min} min", xs.len())));
            }
            (xs, ys)
        }
    };
    let (slope, intercept, r2) = ols(&abscissa, &ordinate)?;
    Ok(PatlakPlot {
        abscissa,
        ordinate,
        slope,
        intercept,
        r2,
    })
}

fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("Patlak abscissa is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok((slope, intercept, r2))
}
