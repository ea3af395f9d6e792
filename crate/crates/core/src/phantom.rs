//! Digital Patlak phantoms and frame synthesis.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{forward_project, FrameTiming, ParametricImage, PatlakBasis};
use crate::rng::stream_rng;
use crate::series::DynamicSeries;
use crate::volume::{Dims, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Organ,
    Lesion,
    Reference,
}

/// Axis-aligned ellipsoid in voxel coordinates `(x, y, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
    pub kappa: f64,
    pub b: f64,
    pub kind: RegionKind,
}

impl Ellipsoid {
    pub fn sphere(center: [f64; 3], radius: f64, kappa: f64, b: f64, kind: RegionKind) -> Self {
        Self {
            center,
            radii: [radius; 3],
            kappa,
            b,
            kind,
        }
    }

    /// Whether the voxel centre `p` lies inside. Degenerate ellipsoids with
    /// any zero radius are empty.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        if self.radii.iter().any(|&r| r <= 0.0) {
            return false;
        }
        let mut s = 0.0;
        for a in 0..3 {
            let d = (p[a] - self.center[a]) / self.radii[a];
            s += d * d;
        }
        s <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: Dims,
    /// Background `(κ, b)`.
    pub background: [f64; 2],
    /// Painted in order; later ellipsoids override earlier ones. Ellipsoid
    /// `i` gets region label `i + 1`, background is 0.
    pub ellipsoids: Vec<Ellipsoid>,
    pub seed: u64,
}

impl PhantomSpec {
    /// 64×64×96 torso with a liver-like reference organ and three lesions
    /// at 3 to 5 times the reference uptake rate.
    pub fn desk_preset() -> Self {
        use RegionKind::*;
        Self {
            dims: [64, 64, 96],
            background: [0.0005, 0.01],
            ellipsoids: vec![
                Ellipsoid {
                    center: [32.0, 32.0, 48.0],
                    radii: [28.0, 28.0, 44.0],
                    kappa: 0.004,
                    b: 0.3,
                    kind: Organ,
                },
                Ellipsoid {
                    center: [28.0, 30.0, 48.0],
                    radii: [16.0, 16.0, 24.0],
                    kappa: 0.01,
                    b: 0.6,
                    kind: Reference,
                },
                Ellipsoid::sphere([24.0, 26.0, 40.0], 3.0, 0.05, 0.6, Lesion),
                Ellipsoid::sphere([32.0, 34.0, 58.0], 2.5, 0.04, 0.6, Lesion),
                Ellipsoid::sphere([46.0, 22.0, 48.0], 3.0, 0.03, 0.6, Lesion),
            ],
            seed: 123,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Spec(format!("zero-sized dims {:?}", self.dims)));
        }
        if self.background.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Spec("background (κ, b) must be finite and ≥ 0".into()));
        }
        for (i, e) in self.ellipsoids.iter().enumerate() {
            if !(e.kappa >= 0.0 && e.b >= 0.0 && e.kappa.is_finite() && e.b.is_finite()) {
                return Err(Error::Spec(format!("ellipsoid {i}: (κ, b) must be finite and ≥ 0")));
            }
            for a in 0..3 {
                let (c, r) = (e.center[a], e.radii[a]);
                if !(r >= 0.0 && c.is_finite() && r.is_finite()) {
                    return Err(Error::Spec(format!("ellipsoid {i}: invalid geometry")));
                }
                if c - r < 0.0 || c + r > (self.dims[a] - 1) as f64 {
                    return Err(Error::Spec(format!(
                        "ellipsoid {i} extends outside the volume along axis {a}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn labels_of(&self, kind: RegionKind) -> Vec<u32> {
        self.ellipsoids
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == kind)
            .map(|(i, _)| i as u32 + 1)
            .collect()
    }
}

/// Ground truth with its region label map.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub truth: ParametricImage,
    /// Region ids stored as floats so the map can be written as a volume.
    pub labels: Volume3D,
    pub spec: PhantomSpec,
}

impl Phantom {
    pub fn mask(&self, label: u32) -> Vec<bool> {
        self.labels.data().iter().map(|&l| l as u32 == label).collect()
    }

    pub fn lesion_labels(&self) -> Vec<u32> {
        self.spec.labels_of(RegionKind::Lesion)
    }

    pub fn reference_label(&self) -> Option<u32> {
        self.spec.labels_of(RegionKind::Reference).last().copied()
    }

    /// Label map painted without lesions, an anatomical image that carries
    /// no knowledge of the lesions.
    pub fn anatomy_guide(&self) -> Volume3D {
        let mut spec = self.spec.clone();
        spec.ellipsoids.retain(|e| e.kind != RegionKind::Lesion);
        paint(&spec).1
    }
}

fn paint(spec: &PhantomSpec) -> (ParametricImage, Volume3D) {
    let mut truth = ParametricImage::filled(spec.dims, spec.background[0], spec.background[1]);
    let mut labels = Volume3D::zeros(spec.dims);
    for (i, e) in spec.ellipsoids.iter().enumerate() {
        // only the bounding box can be inside
        let lo: Vec<usize> = (0..3).map(|a| (e.center[a] - e.radii[a]).ceil().max(0.0) as usize).collect();
        let hi: Vec<usize> = (0..3)
            .map(|a| ((e.center[a] + e.radii[a]).floor() as usize).min(spec.dims[a] - 1))
            .collect();
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    if e.contains([x as f64, y as f64, z as f64]) {
                        truth.kappa.set(x, y, z, e.kappa);
                        truth.b.set(x, y, z, e.b);
                        labels.set(x, y, z, (i + 1) as f64);
                    }
                }
            }
        }
    }
    (truth, labels)
}

pub fn build_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (truth, labels) = paint(spec);
    Ok(Phantom {
        truth,
        labels,
        spec: spec.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
}

/// Additive Gaussian frame noise with count-like scaling
/// `σ_m = base_sigma / sqrt(dose · Δt_m / Δt_ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub base_sigma: f64,
    pub dose_fraction: f64,
    pub scale_with_duration: bool,
    pub reference_duration_s: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            base_sigma: 4.5,
            dose_fraction: 1.0,
            scale_with_duration: true,
            reference_duration_s: 300.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_sigma > 0.0 && self.base_sigma.is_finite()) {
            return Err(Error::Config(format!("base_sigma {} must be positive", self.base_sigma)));
        }
        if !(self.dose_fraction > 0.0 && self.dose_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "dose fraction {} outside (0, 1]",
                self.dose_fraction
            )));
        }
        if !(self.reference_duration_s > 0.0) {
            return Err(Error::Config("reference duration must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_sigma(&self, duration_s: f64) -> f64 {
        let rel = if self.scale_with_duration {
            duration_s / self.reference_duration_s
        } else {
            1.0
        };
        self.base_sigma / (self.dose_fraction * rel).sqrt()
    }
}

/// Noisy frames `y_m = (A x)_m + ε_m`. Frame `m` draws from stream `m` of
/// `seed`, so frames can be generated in any order.
pub fn synthesize_series(
    x: &ParametricImage,
    basis: &PatlakBasis,
    timing: &FrameTiming,
    noise: &NoiseModel,
    seed: u64,
) -> Result<DynamicSeries> {
    noise.validate()?;
    if basis.len() != timing.len() {
        return Err(Error::Shape(format!(
            "{}-row basis for {} frames",
            basis.len(),
            timing.len()
        )));
    }
    let mut frames = forward_project(x, basis);
    for (m, (frame, f)) in frames.iter_mut().zip(timing.frames()).enumerate() {
        let sigma = noise.frame_sigma(f.duration_s());
        let mut rng = stream_rng(seed, m as u64);
        for v in frame.data_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * e;
        }
    }
    DynamicSeries::new(frames, timing.clone(), noise.dose_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::Frame;

    fn spec(ellipsoids: Vec<Ellipsoid>) -> PhantomSpec {
        PhantomSpec {
            dims: [12, 10, 8],
            background: [0.001, 0.02],
            ellipsoids,
            seed: 0,
        }
    }

    #[test]
    fn empty_spec_is_uniform() {
        let p = build_phantom(&spec(vec![])).unwrap();
        assert!(p.truth.kappa.data().iter().all(|&v| v == 0.001));
        assert!(p.truth.b.data().iter().all(|&v| v == 0.02));
        assert!(p.labels.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_radius_is_empty() {
        let e = Ellipsoid::sphere([5.0, 5.0, 4.0], 0.0, 0.1, 0.5, RegionKind::Lesion);
        let p = build_phantom(&spec(vec![e])).unwrap();
        assert!(p.truth.kappa.data().iter().all(|&v| v == 0.001));
    }

    #[test]
    fn override_order_matches_membership_oracle() {
        let a = Ellipsoid {
            center: [5.0, 4.5, 3.5],
            radii: [4.0, 3.0, 2.5],
            kappa: 0.01,
            b: 0.3,
            kind: RegionKind::Organ,
        };
        let b = Ellipsoid::sphere([7.0, 5.0, 4.0], 2.2, 0.05, 0.6, RegionKind::Lesion);
        let s = spec(vec![a.clone(), b.clone()]);
        let p = build_phantom(&s).unwrap();
        let inside = |e: &Ellipsoid, x: usize, y: usize, z: usize| {
            let d = [
                (x as f64 - e.center[0]) / e.radii[0],
                (y as f64 - e.center[1]) / e.radii[1],
                (z as f64 - e.center[2]) / e.radii[2],
            ];
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= 1.0
        };
        for z in 0..8 {
            for y in 0..10 {
                for x in 0..12 {
                    let (k, l) = if inside(&b, x, y, z) {
                        (0.05, 2.0)
                    } else if inside(&a, x, y, z) {
                        (0.01, 1.0)
                    } else {
                        (0.001, 0.0)
                    };
                    assert_eq!(p.truth.kappa.get(x, y, z), k);
                    assert_eq!(p.labels.get(x, y, z), l);
                }
            }
        }
        let guide = p.anatomy_guide();
        assert!(guide.data().iter().all(|&l| l != 2.0));
    }

    #[test]
    fn out_of_bounds_rejected() {
        let e = Ellipsoid::sphere([1.0, 5.0, 4.0], 2.0, 0.1, 0.5, RegionKind::Organ);
        assert!(matches!(build_phantom(&spec(vec![e])), Err(Error::Spec(_))));
        let neg = Ellipsoid::sphere([5.0, 5.0, 4.0], 1.0, -0.1, 0.5, RegionKind::Organ);
        assert!(matches!(build_phantom(&spec(vec![neg])), Err(Error::Spec(_))));
    }

    #[test]
    fn desk_preset_is_valid() {
        let s = PhantomSpec::desk_preset();
        let p = build_phantom(&s).unwrap();
        assert_eq!(p.lesion_labels(), vec![3, 4, 5]);
        assert_eq!(p.reference_label(), Some(2));
        for l in 3..=5 {
            assert!(p.mask(l).iter().filter(|&&m| m).count() > 20);
        }
    }

    #[test]
    fn frame_sigma_scaling() {
        let n = NoiseModel {
            base_sigma: 2.0,
            dose_fraction: 0.25,
            ..Default::default()
        };
        assert!((n.frame_sigma(300.0) - 4.0).abs() < 1e-12);
        assert!((n.frame_sigma(75.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let b = PatlakBasis::from_rows(vec![[1.0, 0.5], [2.0, 0.4]], 0.0).unwrap();
        let t = FrameTiming::new(vec![Frame::new(0.0, 300.0), Frame::new(300.0, 600.0)]).unwrap();
        let x = ParametricImage::filled([4, 4, 4], 1.0, 2.0);
        let n = NoiseModel::default();
        let a = synthesize_series(&x, &b, &t, &n, 5).unwrap();
        let c = synthesize_series(&x, &b, &t, &n, 5).unwrap();
        assert_eq!(a, c);
        let d = synthesize_series(&x, &b, &t, &n, 6).unwrap();
        assert_ne!(a, d);
    }
}
