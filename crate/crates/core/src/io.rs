//! PVOL volume files and dynamic-series directories.
//!
//! PVOL v1 layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `PVOL` |
//! | 4     | u32 version (= 1) |
//! | 12    | u32 nx, ny, nz |
//! | 12    | f32 voxel size in mm (x, y, z) |
//! | 4·N   | f32 payload, x-fastest, N = nx·ny·nz |
//!
//! A series directory holds one PVOL per frame plus `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{Frame, FrameTiming};
use crate::series::DynamicSeries;
use crate::volume::Volume3D;

pub const PVOL_MAGIC: &[u8; 4] = b"PVOL";
pub const PVOL_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 12;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn encode_volume(vol: &Volume3D) -> Result<Vec<u8>> {
    let dims = vol.dims();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * vol.len());
    buf.extend_from_slice(PVOL_MAGIC);
    buf.extend_from_slice(&PVOL_VERSION.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Domain(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for s in vol.voxel_size() {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for (i, &v) in vol.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::Domain(format!(
                "voxel {i} value {v} is not representable as a finite f32"
            )));
        }
        buf.extend_from_slice(&f.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_volume(bytes: &[u8], path: &Path) -> Result<Volume3D> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    if &bytes[0..4] != PVOL_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != PVOL_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
    if dims.contains(&0) {
        return Err(Error::format(path, format!("zero dimension in {dims:?}")));
    }
    let voxel_size = [f32_at(20), f32_at(24), f32_at(28)];
    if voxel_size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::format(path, format!("invalid voxel size {voxel_size:?}")));
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::format(path, "dims overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * n {
        return Err(Error::format(
            path,
            format!(
                "dims {dims:?} require {} payload bytes, found {}",
                4 * n,
                payload.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(n);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(path, format!("non-finite value at voxel {i}")));
        }
        data.push(v as f64);
    }
    Ok(Volume3D::from_vec(dims, data)?.with_voxel_size(voxel_size))
}

pub fn write_volume(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_volume(vol)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesManifest {
    pub dose_fraction: f64,
    pub frames: Vec<FrameEntry>,
}

pub fn write_series(series: &DynamicSeries, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::with_capacity(series.len());
    for (m, (vol, frame)) in series
        .frames()
        .iter()
        .zip(series.timing().frames())
        .enumerate()
    {
        let file = format!("frame_{m:03}.pvol");
        write_volume(vol, dir.join(&file))?;
        frames.push(FrameEntry {
            index: m,
            t_start_s: frame.start_s,
            t_end_s: frame.end_s,
            file,
        });
    }
    let manifest = SeriesManifest {
        dose_fraction: series.dose_fraction(),
        frames,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_series(dir: impl AsRef<Path>) -> Result<DynamicSeries> {
    let dir = dir.as_ref();
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut manifest: SeriesManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    manifest.frames.sort_by_key(|f| f.index);
    if manifest
        .frames
        .iter()
        .enumerate()
        .any(|(i, f)| f.index != i)
    {
        return Err(Error::format(&path, "frame indices must be 0..M without gaps"));
    }
    let timing = FrameTiming::new(
        manifest
            .frames
            .iter()
            .map(|f| Frame::new(f.t_start_s, f.t_end_s))
            .collect(),
    )?;
    let frames = manifest
        .frames
        .iter()
        .map(|f| read_volume(dir.join(&f.file)))
        .collect::<Result<Vec<_>>>()?;
    DynamicSeries::new(frames, timing, manifest.dose_fraction)
}
