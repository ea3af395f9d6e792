//! HYPR-LR denoising of dynamic frames.

use super::gaussian::box_filter;
use crate::error::Result;
use crate::series::DynamicSeries;
use crate::volume::Volume3D;

/// Relative floor on the filtered composite, as a fraction of its maximum.
pub const HYPR_DENOM_FLOOR: f64 = 1e-3;

/// Duration-weighted temporal mean of the frames.
pub fn composite(series: &DynamicSeries) -> Volume3D {
    let mut c = Volume3D::zeros(series.dims());
    let mut total = 0.0;
    for (frame, timing) in series.frames().iter().zip(series.timing().frames()) {
        let w = timing.duration_s();
        c.axpy(w, frame);
        total += w;
    }
    c.scale(1.0 / total);
    c
}

/// `y_m ← C · (F ⊛ y_m) / (F ⊛ C)` with a box kernel `F` of width
/// `kernel_size`. Where `F ⊛ C` falls below the floor the ratio is
/// evaluated against the floor.
pub fn hypr_filter(series: &DynamicSeries, kernel_size: usize) -> Result<DynamicSeries> {
    if kernel_size.is_multiple_of(2) {
        return Err(crate::Error::Config("HYPR kernel size must be odd".into()));
    }
    let c = composite(series);
    let fc = box_filter(&c, kernel_size);
    let floor = HYPR_DENOM_FLOOR * fc.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let frames = series
        .frames()
        .iter()
        .map(|y| {
            let fy = box_filter(y, kernel_size);
            let mut out = fy.clone();
            for (i, o) in out.data_mut().iter_mut().enumerate() {
                let denom = fc.data()[i].max(floor);
                *o = if denom > 0.0 {
                    c.data()[i] * (fy.data()[i] / denom)
                } else {
                    fy.data()[i]
                };
            }
            out.with_voxel_size(y.voxel_size())
        })
        .collect();
    series.with_frames(frames)
}
