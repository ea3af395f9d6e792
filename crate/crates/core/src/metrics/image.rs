use crate::denoise::separable_convolve;
use crate::error::{Error, Result};
use crate::volume::Volume3D;

pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Window radius in units of `SSIM_SIGMA`.
pub const SSIM_TRUNCATE: f64 = 3.5;

/// Peak signal-to-noise ratio in dB with the peak taken as `max(reference)`.
/// Identical images give `f64::INFINITY`.
pub fn psnr(test: &Volume3D, reference: &Volume3D) -> Result<f64> {
    test.check_same_shape(reference, "psnr")?;
    let mse = test
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / test.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = reference.max();
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalised 1D taps of the SSIM window.
pub fn ssim_window() -> Vec<f64> {
    let radius = (SSIM_TRUNCATE * SSIM_SIGMA + 0.5) as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-0.5 * (d * d) as f64 / (SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Mean structural similarity with a separable 3D Gaussian window and
/// mirrored boundaries. The dynamic range is `max(ref) − min(ref)`.
pub fn ssim(test: &Volume3D, reference: &Volume3D) -> Result<f64> {
    test.check_same_shape(reference, "ssim")?;
    let range = reference.max() - reference.min();
    if !(range > 0.0) {
        return Err(Error::Degenerate("reference image has zero dynamic range".into()));
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let w = ssim_window();
    let blur = |v: &Volume3D| separable_convolve(v, &w);
    let mx = blur(test);
    let my = blur(reference);
    let mxx = blur(&test.zip_map(test, |a, b| a * b));
    let myy = blur(&reference.zip_map(reference, |a, b| a * b));
    let mxy = blur(&test.zip_map(reference, |a, b| a * b));
    let n = test.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (ux, uy) = (mx.data()[i], my.data()[i]);
        let sxx = mxx.data()[i] - ux * ux;
        let syy = myy.data()[i] - uy * uy;
        let sxy = mxy.data()[i] - ux * uy;
        acc += ((2.0 * ux * uy + c1) * (2.0 * sxy + c2)) / ((ux * ux + uy * uy + c1) * (sxx + syy + c2));
    }
    Ok(acc / n as f64)
}
