use crate::volume::Volume3D;

/// FWHM to standard deviation.
pub const FWHM_TO_SIGMA: f64 = 1.0 / 2.3548;

/// Below this FWHM (voxels) the filter is the identity.
pub const MIN_FWHM: f64 = 0.1;

/// Normalised 1D Gaussian taps, truncated at 4σ.
pub fn gaussian_kernel(fwhm_voxels: f64) -> Vec<f64> {
    let sigma = fwhm_voxels * FWHM_TO_SIGMA;
    let radius = (4.0 * sigma).ceil() as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Reflects an out-of-range index back into `0..n` (edge sample repeated).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Separable convolution with a symmetric kernel along each axis, mirrored
/// boundaries.
pub(crate) fn separable_convolve(vol: &Volume3D, taps: &[f64]) -> Volume3D {
    let mut cur = vol.clone();
    for axis in 0..3 {
        cur = convolve_axis(&cur, taps, axis);
    }
    cur
}

pub(crate) fn convolve_axis(vol: &Volume3D, taps: &[f64], axis: usize) -> Volume3D {
    let dims = vol.dims();
    let n = dims[axis];
    let radius = (taps.len() / 2) as isize;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let src = vol.data();
    let mut out = vol.clone();
    let dst = out.data_mut();
    let mut line = vec![0.0; n];
    let lines_outer = vol.len() / n;
    for l in 0..lines_outer {
        // start offset of line `l` along `axis`
        let start = match axis {
            0 => l * n,
            1 => (l / dims[0]) * dims[0] * dims[1] + l % dims[0],
            _ => l,
        };
        for (k, v) in line.iter_mut().enumerate() {
            *v = src[start + k * stride];
        }
        for k in 0..n {
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let j = reflect(k as isize + t as isize - radius, n);
                acc += w * line[j];
            }
            dst[start + k * stride] = acc;
        }
    }
    out
}

/// Gaussian smoothing with the given FWHM in voxels.
pub fn gaussian_filter(vol: &Volume3D, fwhm_voxels: f64) -> Volume3D {
    if !(fwhm_voxels >= MIN_FWHM) {
        return vol.clone();
    }
    separable_convolve(vol, &gaussian_kernel(fwhm_voxels))
}

/// Box (uniform) filter of odd width `size`, mirrored boundaries.
pub fn box_filter(vol: &Volume3D, size: usize) -> Volume3D {
    assert!(size % 2 == 1, "box kernel size must be odd");
    let taps = vec![1.0 / size as f64; size];
    separable_convolve(vol, &taps)
}
