//! Dense 3D scalar volumes.
//!
//! Storage is x-fastest: the voxel `(x, y, z)` lives at `x + nx * (y + ny * z)`.

use crate::error::{Error, Result};

pub type Dims = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    voxel_size: [f32; 3],
    data: Vec<f64>,
}

pub const DEFAULT_VOXEL_SIZE: [f32; 3] = [1.0, 1.0, 1.0];

impl Volume3D {
    pub fn zeros(dims: Dims) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "volume dims must be positive");
        Self {
            dims,
            voxel_size: DEFAULT_VOXEL_SIZE,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Builds a volume from raw x-fastest data, enforcing the length and
    /// finiteness invariants.
    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("zero-sized dims {dims:?}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {:?} ({} voxels)",
                data.len(),
                dims,
                expected
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at voxel {i}")));
        }
        Ok(Self {
            dims,
            voxel_size: DEFAULT_VOXEL_SIZE,
            data,
        })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut vol = Self::zeros(dims);
        let mut i = 0;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    vol.data[i] = f(x, y, z);
                    i += 1;
                }
            }
        }
        vol
    }

    pub fn with_voxel_size(mut self, voxel_size: [f32; 3]) -> Self {
        self.voxel_size = voxel_size;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxel_size(&self) -> [f32; 3] {
        self.voxel_size
    }

    pub fn set_voxel_size(&mut self, voxel_size: [f32; 3]) {
        self.voxel_size = voxel_size;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    /// Coordinates of a flat index.
    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    pub fn same_shape(&self, other: &Volume3D) -> bool {
        self.dims == other.dims
    }

    pub fn check_same_shape(&self, other: &Volume3D, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: dims {:?} vs {:?}",
                self.dims, other.dims
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume3D {
        Volume3D {
            dims: self.dims,
            voxel_size: self.voxel_size,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Voxel-wise combination. Panics on shape mismatch; callers validate first.
    pub fn zip_map(&self, other: &Volume3D, f: impl Fn(f64, f64) -> f64) -> Volume3D {
        assert_eq!(self.dims, other.dims, "zip_map on mismatched volumes");
        Volume3D {
            dims: self.dims,
            voxel_size: self.voxel_size,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Volume3D) {
        assert_eq!(self.dims, other.dims, "axpy on mismatched volumes");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn dot(&self, other: &Volume3D) -> f64 {
        assert_eq!(self.dims, other.dims, "dot on mismatched volumes");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Linear-interpolated percentile, `q` in [0, 100].
    pub fn percentile(&self, q: f64) -> f64 {
        let mut sorted = self.data.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        percentile_sorted(&sorted, q)
    }

    /// Copies the sub-block starting at `origin` with extent `dims`.
    pub fn crop(&self, origin: [usize; 3], dims: Dims) -> Result<Volume3D> {
        for a in 0..3 {
            if dims[a] == 0 || origin[a] + dims[a] > self.dims[a] {
                return Err(Error::InvalidLayout(format!(
                    "block at {origin:?} with dims {dims:?} exceeds volume {:?}",
                    self.dims
                )));
            }
        }
        let mut out = Volume3D::zeros(dims).with_voxel_size(self.voxel_size);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                let src = self.index(origin[0], origin[1] + y, origin[2] + z);
                let dst = out.index(0, y, z);
                out.data[dst..dst + dims[0]].copy_from_slice(&self.data[src..src + dims[0]]);
            }
        }
        Ok(out)
    }
}

pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let q = q.clamp(0.0, 100.0);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
