//! Overlapping patch partition and ramp-weighted merge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, Volume3D};

/// A regular tiling of a parent volume into equally sized patches.
///
/// Along every axis the patch origins are `0, s, 2s, ...` with stride
/// `s = patch - overlap`, and the last patch ends exactly at the volume edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLayout {
    volume_dims: Dims,
    patch_dims: Dims,
    overlap: [usize; 3],
    origins: Vec<[usize; 3]>,
}

impl PatchLayout {
    /// Tiles `volume_dims` with patches of `patch_dims` sharing `overlap`
    /// slabs between neighbours along each axis.
    pub fn tile(volume_dims: Dims, patch_dims: Dims, overlap: [usize; 3]) -> Result<Self> {
        let mut axis_positions: [Vec<usize>; 3] = Default::default();
        for a in 0..3 {
            axis_positions[a] = axis_origins(volume_dims[a], patch_dims[a], overlap[a], a)?;
        }
        let mut origins = Vec::new();
        for &z in &axis_positions[2] {
            for &y in &axis_positions[1] {
                for &x in &axis_positions[0] {
                    origins.push([x, y, z]);
                }
            }
        }
        Ok(Self {
            volume_dims,
            patch_dims,
            overlap,
            origins,
        })
    }

    /// One patch covering the whole volume.
    pub fn single(volume_dims: Dims) -> Self {
        Self {
            volume_dims,
            patch_dims: volume_dims,
            overlap: [0; 3],
            origins: vec![[0, 0, 0]],
        }
    }

    /// Axial split used for the total-body data: 192x288x520 volumes cut into
    /// 136-slice patches with 8 shared slices.
    pub fn total_body_preset() -> Self {
        Self::tile([192, 288, 520], [192, 288, 136], [0, 0, 8])
            .expect("preset layout is valid")
    }

    /// Validates an explicit origin list against the regular-tiling rules.
    pub fn from_origins(
        volume_dims: Dims,
        patch_dims: Dims,
        overlap: [usize; 3],
        origins: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let expected = Self::tile(volume_dims, patch_dims, overlap)?;
        let mut given = origins.clone();
        let mut want = expected.origins.clone();
        given.sort_unstable();
        want.sort_unstable();
        if given != want {
            return Err(Error::InvalidLayout(format!(
                "origins {origins:?} do not form a cover with overlap {overlap:?}"
            )));
        }
        Ok(Self {
            volume_dims,
            patch_dims,
            overlap,
            origins,
        })
    }

    pub fn volume_dims(&self) -> Dims {
        self.volume_dims
    }

    pub fn patch_dims(&self) -> Dims {
        self.patch_dims
    }

    pub fn overlap(&self) -> [usize; 3] {
        self.overlap
    }

    pub fn origins(&self) -> &[[usize; 3]] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Ramp weight of local coordinate `l` for a patch starting at `origin`
    /// along axis `a`.
    fn axis_weight(&self, a: usize, origin: usize, l: usize) -> f64 {
        let n = self.patch_dims[a];
        let ov = self.overlap[a];
        if ov == 0 {
            return 1.0;
        }
        let denom = (ov + 1) as f64;
        let has_prev = origin > 0;
        let has_next = origin + n < self.volume_dims[a];
        if has_prev && l < ov {
            (l + 1) as f64 / denom
        } else if has_next && l >= n - ov {
            (n - l) as f64 / denom
        } else {
            1.0
        }
    }

    fn weight(&self, origin: &[usize; 3], local: [usize; 3]) -> f64 {
        (0..3)
            .map(|a| self.axis_weight(a, origin[a], local[a]))
            .product()
    }

    /// Sum of merge weights at every voxel of the parent volume.
    pub fn weight_sums(&self) -> Volume3D {
        let mut sums = Volume3D::zeros(self.volume_dims);
        let pd = self.patch_dims;
        for origin in &self.origins {
            for z in 0..pd[2] {
                for y in 0..pd[1] {
                    for x in 0..pd[0] {
                        let i = sums.index(origin[0] + x, origin[1] + y, origin[2] + z);
                        sums.data_mut()[i] += self.weight(origin, [x, y, z]);
                    }
                }
            }
        }
        sums
    }
}

fn axis_origins(dim: usize, patch: usize, overlap: usize, axis: usize) -> Result<Vec<usize>> {
    if patch == 0 || patch > dim {
        return Err(Error::InvalidLayout(format!(
            "axis {axis}: patch extent {patch} incompatible with volume extent {dim}"
        )));
    }
    if patch == dim {
        return Ok(vec![0]);
    }
    if 2 * overlap > patch {
        return Err(Error::InvalidLayout(format!(
            "axis {axis}: overlap {overlap} exceeds half the patch extent {patch}"
        )));
    }
    let stride = patch - overlap;
    if !(dim - patch).is_multiple_of(stride) {
        return Err(Error::InvalidLayout(format!(
            "axis {axis}: extent {dim} cannot be tiled by patches of {patch} with overlap {overlap}"
        )));
    }
    Ok((0..=(dim - patch) / stride).map(|k| k * stride).collect())
}

/// Cuts `vol` into the patches of `layout`, in layout order.
pub fn partition(vol: &Volume3D, layout: &PatchLayout) -> Result<Vec<Volume3D>> {
    if vol.dims() != layout.volume_dims {
        return Err(Error::InvalidLayout(format!(
            "layout built for {:?} applied to volume {:?}",
            layout.volume_dims,
            vol.dims()
        )));
    }
    layout
        .origins
        .iter()
        .map(|&o| vol.crop(o, layout.patch_dims))
        .collect()
}

/// Reassembles patches, blending overlaps with linear ramps.
///
/// Each voxel is accumulated as `first + sum_k w_k (p_k - first) / sum_k w_k`
/// in patch order, so identical overlapping values merge bit-exactly.
pub fn merge(patches: &[Volume3D], layout: &PatchLayout) -> Result<Volume3D> {
    if patches.len() != layout.origins.len() {
        return Err(Error::InvalidLayout(format!(
            "{} patches for a layout of {}",
            patches.len(),
            layout.origins.len()
        )));
    }
    if let Some(p) = patches.iter().find(|p| p.dims() != layout.patch_dims) {
        return Err(Error::InvalidLayout(format!(
            "patch dims {:?} differ from layout {:?}",
            p.dims(),
            layout.patch_dims
        )));
    }
    let mut out = Volume3D::zeros(layout.volume_dims);
    if let Some(p) = patches.first() {
        out.set_voxel_size(p.voxel_size());
    }
    let n = out.len();
    let mut first = vec![f64::NAN; n];
    let mut acc = vec![0.0; n];
    let mut wsum = vec![0.0; n];
    let pd = layout.patch_dims;
    for (patch, origin) in patches.iter().zip(&layout.origins) {
        for z in 0..pd[2] {
            for y in 0..pd[1] {
                for x in 0..pd[0] {
                    let w = layout.weight(origin, [x, y, z]);
                    let value = patch.get(x, y, z);
                    let i = out.index(origin[0] + x, origin[1] + y, origin[2] + z);
                    if wsum[i] == 0.0 {
                        first[i] = value;
                    } else {
                        acc[i] += w * (value - first[i]);
                    }
                    wsum[i] += w;
                }
            }
        }
    }
    for (i, o) in out.data_mut().iter_mut().enumerate() {
        *o = if acc[i] == 0.0 {
            first[i]
        } else {
            first[i] + acc[i] / wsum[i]
        };
    }
    Ok(out)
}
