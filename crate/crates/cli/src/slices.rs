//! 8-bit PGM slice export.

use std::fs;
use std::path::{Path, PathBuf};

use patlak_core::Volume3D;

use crate::config::Axis;
use crate::error::{CliError, CliResult};

/// Linear window `[lo, hi]` mapped to gray levels 0..=255, clamped outside.
pub fn quantize(v: f64, window: [f64; 2]) -> u8 {
    let [lo, hi] = window;
    let s = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    if s.is_nan() {
        return 0;
    }
    (255.0 * s).round() as u8
}

pub fn check_window(window: [f64; 2]) -> CliResult<()> {
    let [lo, hi] = window;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(CliError::Config(format!("display window [{lo}, {hi}] is empty")));
    }
    Ok(())
}

/// Pixels of one slice, row-major. Axial slices are `x` across and `y`
/// down; coronal and sagittal slices run `z` down.
pub fn slice_pixels(vol: &Volume3D, axis: Axis, index: usize, window: [f64; 2]) -> CliResult<(usize, usize, Vec<u8>)> {
    check_window(window)?;
    let [nx, ny, nz] = vol.dims();
    let extent = vol.dims()[axis.index()];
    if index >= extent {
        return Err(CliError::Config(format!(
            "slice {index} outside axis {} of extent {extent}",
            axis.name()
        )));
    }
    let (w, h) = match axis {
        Axis::Z => (nx, ny),
        Axis::Y => (nx, nz),
        Axis::X => (ny, nz),
    };
    let mut px = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let v = match axis {
                Axis::Z => vol.get(c, r, index),
                Axis::Y => vol.get(c, index, r),
                Axis::X => vol.get(index, c, r),
            };
            px.push(quantize(v, window));
        }
    }
    Ok((w, h, px))
}

fn write_pgm(path: &Path, w: usize, h: usize, px: &[u8]) -> CliResult<()> {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(px);
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes one PGM per index into `dir`, named
/// `{stem}_{axis}{index}_w{lo}_{hi}.pgm`.
pub fn emit_slices(
    vol: &Volume3D,
    axis: Axis,
    indices: &[usize],
    window: [f64; 2],
    dir: &Path,
    stem: &str,
) -> CliResult<Vec<PathBuf>> {
    check_window(window)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let (w, h, px) = slice_pixels(vol, axis, i, window)?;
        let path = dir.join(format!(
            "{stem}_{}{i:03}_w{:e}_{:e}.pgm",
            axis.name(),
            window[0],
            window[1]
        ));
        write_pgm(&path, w, h, &px)?;
        out.push(path);
    }
    Ok(out)
}
