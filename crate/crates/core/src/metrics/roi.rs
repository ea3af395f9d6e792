use rand::Rng;

use crate::error::{Error, Result};
use crate::phantom::Phantom;
use crate::rng::stream_rng;
use crate::volume::Volume3D;

pub const REFERENCE_SPHERES: usize = 20;
pub const REFERENCE_RADIUS: f64 = 5.0;
const MAX_PLACEMENT_ATTEMPTS: usize = 200_000;

/// Lesion regions and the pooled reference region, as voxel indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSet {
    pub lesions: Vec<Vec<usize>>,
    /// Union of the reference spheres, sorted.
    pub reference: Vec<usize>,
    pub sphere_centers: Vec<[usize; 3]>,
}

/// Indices of the voxels within `radius` of `center`, or `None` when the
/// ball leaves the volume.
fn ball(dims: [usize; 3], center: [usize; 3], radius: f64) -> Option<Vec<usize>> {
    let r = radius.floor() as usize;
    if (0..3).any(|a| center[a] < r || center[a] + r >= dims[a]) {
        return None;
    }
    let mut out = Vec::new();
    for z in center[2] - r..=center[2] + r {
        for y in center[1] - r..=center[1] + r {
            for x in center[0] - r..=center[0] + r {
                let d2 = [x, y, z]
                    .iter()
                    .zip(&center)
                    .map(|(&p, &c)| (p as f64 - c as f64).powi(2))
                    .sum::<f64>();
                if d2 <= radius * radius {
                    out.push(x + dims[0] * (y + dims[1] * z));
                }
            }
        }
    }
    Some(out)
}

impl RoiSet {
    /// Lesions from their labels; `n_spheres` balls of `radius` placed by
    /// rejection sampling entirely inside the region labelled `reference`.
    pub fn place(
        labels: &Volume3D,
        lesion_labels: &[u32],
        reference: u32,
        n_spheres: usize,
        radius: f64,
        seed: u64,
    ) -> Result<Self> {
        let lab = labels.data();
        let lesions: Vec<Vec<usize>> = lesion_labels
            .iter()
            .map(|&l| (0..lab.len()).filter(|&i| lab[i] as u32 == l).collect())
            .collect();
        if let Some(i) = lesions.iter().position(|l| l.is_empty()) {
            return Err(Error::Degenerate(format!("lesion {} has no voxels", lesion_labels[i])));
        }
        let dims = labels.dims();
        let mut rng = stream_rng(seed, 0);
        let mut centers = Vec::with_capacity(n_spheres);
        let mut union = vec![false; lab.len()];
        let mut attempts = 0;
        while centers.len() < n_spheres {
            attempts += 1;
            if attempts > MAX_PLACEMENT_ATTEMPTS {
                return Err(Error::Degenerate(format!(
                    "placed only {} of {n_spheres} reference spheres",
                    centers.len()
                )));
            }
            let c = [
                rng.gen_range(0..dims[0]),
                rng.gen_range(0..dims[1]),
                rng.gen_range(0..dims[2]),
            ];
            if lab[labels.index(c[0], c[1], c[2])] as u32 != reference {
                continue;
            }
            if let Some(idx) = ball(dims, c, radius) {
                if idx.iter().all(|&i| lab[i] as u32 == reference) {
                    idx.iter().for_each(|&i| union[i] = true);
                    centers.push(c);
                }
            }
        }
        let reference = (0..lab.len()).filter(|&i| union[i]).collect();
        Ok(Self {
            lesions,
            reference,
            sphere_centers: centers,
        })
    }

    /// Twenty radius-5 reference spheres in the phantom's reference organ,
    /// placed with the phantom seed.
    pub fn from_phantom(p: &Phantom) -> Result<Self> {
        let reference = p
            .reference_label()
            .ok_or_else(|| Error::Spec("phantom has no reference region".into()))?;
        Self::place(
            &p.labels,
            &p.lesion_labels(),
            reference,
            REFERENCE_SPHERES,
            REFERENCE_RADIUS,
            p.spec.seed,
        )
    }
}

pub(crate) fn mean_std(img: &Volume3D, idx: &[usize]) -> (f64, f64) {
    let n = idx.len() as f64;
    let mu = idx.iter().map(|&i| img.data()[i]).sum::<f64>() / n;
    let var = idx.iter().map(|&i| (img.data()[i] - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// Per-lesion `(μ_lesion − μ_ref) / σ_ref`, with the reference statistics
/// pooled over all reference voxels (population standard deviation).
pub fn cnr(img: &Volume3D, rois: &RoiSet) -> Result<Vec<f64>> {
    if rois.reference.is_empty() {
        return Err(Error::Degenerate("empty reference region".into()));
    }
    if rois.lesions.iter().chain(std::iter::once(&rois.reference)).flatten().any(|&i| i >= img.len()) {
        return Err(Error::Shape("ROI index outside the image".into()));
    }
    let (mu_ref, sd_ref) = mean_std(img, &rois.reference);
    if !(sd_ref > 0.0) {
        return Err(Error::Degenerate("reference standard deviation is zero".into()));
    }
    Ok(rois
        .lesions
        .iter()
        .map(|l| (mean_std(img, l).0 - mu_ref) / sd_ref)
        .collect())
}

/// Per-lesion ratio `CNR_method / CNR_baseline`.
pub fn cnr_improvement(method: &Volume3D, baseline: &Volume3D, rois: &RoiSet) -> Result<Vec<f64>> {
    let m = cnr(method, rois)?;
    let b = cnr(baseline, rois)?;
    m.iter()
        .zip(&b)
        .map(|(&cm, &cb)| {
            if cb == 0.0 || !cb.is_finite() || !cm.is_finite() {
                Err(Error::Degenerate(format!("baseline CNR {cb} cannot normalise {cm}")))
            } else {
                Ok(cm / cb)
            }
        })
        .collect()
}
