//! Non-local means with optional guide image.

use serde::{Deserialize, Serialize};

use super::gaussian::reflect;
use crate::volume::Volume3D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlmConfig {
    /// Edge length of the cubic search window (odd).
    pub search_window: usize,
    /// Edge length of the cubic comparison patch (odd).
    pub patch_size: usize,
    /// Filtering parameter. `None` derives it from the estimated noise level
    /// of the image used for patch distances.
    pub h: Option<f64>,
    /// Multiplier on the automatic `h`.
    pub h_factor: f64,
}

impl Default for NlmConfig {
    fn default() -> Self {
        Self {
            search_window: 7,
            patch_size: 3,
            h: None,
            h_factor: 1.0,
        }
    }
}

impl NlmConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.search_window.is_multiple_of(2) || self.patch_size.is_multiple_of(2) {
            return Err(crate::Error::Config(
                "NLM windows must be odd and positive".into(),
            ));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return Err(crate::Error::Config("NLM h must be positive".into()));
            }
        }
        Ok(())
    }

    /// `h` for a distance image with noise level `sigma`:
    /// `h_factor · σ · sqrt(2 · patch voxels)`, the expected patch distance
    /// between two noisy copies of the same patch.
    pub fn resolve_h(&self, distance_image: &Volume3D, sigma: Option<f64>) -> f64 {
        if let Some(h) = self.h {
            return h;
        }
        let sigma = sigma.unwrap_or_else(|| estimate_noise_sigma(distance_image));
        let p = self.patch_size.pow(3) as f64;
        let h = self.h_factor * sigma * (2.0 * p).sqrt();
        let range = distance_image.max() - distance_image.min();
        h.max(1e-9 * range.max(f64::MIN_POSITIVE))
    }
}

/// Robust noise estimate: median absolute deviation of the 6-neighbour
/// Laplacian, rescaled by the Laplacian's white-noise gain `sqrt(42)`.
pub fn estimate_noise_sigma(vol: &Volume3D) -> f64 {
    let d = vol.dims();
    let mut lap = Vec::with_capacity(vol.len());
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                let at = |dx: isize, dy: isize, dz: isize| {
                    vol.get(
                        reflect(x as isize + dx, d[0]),
                        reflect(y as isize + dy, d[1]),
                        reflect(z as isize + dz, d[2]),
                    )
                };
                let l = at(1, 0, 0) + at(-1, 0, 0) + at(0, 1, 0) + at(0, -1, 0) + at(0, 0, 1)
                    + at(0, 0, -1)
                    - 6.0 * vol.get(x, y, z);
                lap.push(l);
            }
        }
    }
    let median = median_in_place(&mut lap);
    let mut dev: Vec<f64> = lap.iter().map(|v| (v - median).abs()).collect();
    median_in_place(&mut dev) / 0.6745 / 42f64.sqrt()
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Mirror-padded copy of `vol` with `pad` voxels on every side.
fn pad_reflect(vol: &Volume3D, pad: usize) -> (Vec<f64>, [usize; 3]) {
    let d = vol.dims();
    let pd = [d[0] + 2 * pad, d[1] + 2 * pad, d[2] + 2 * pad];
    let mut out = Vec::with_capacity(pd[0] * pd[1] * pd[2]);
    let p = pad as isize;
    for z in 0..pd[2] {
        let sz = reflect(z as isize - p, d[2]);
        for y in 0..pd[1] {
            let sy = reflect(y as isize - p, d[1]);
            for x in 0..pd[0] {
                out.push(vol.get(reflect(x as isize - p, d[0]), sy, sz));
            }
        }
    }
    (out, pd)
}

/// Non-local means.
///
/// Each voxel becomes the weighted mean of the voxels in its search window,
/// with weights `exp(-‖P_i − P_j‖² / h²)` where `‖·‖²` sums squared
/// differences over the comparison patch. Patch distances come from `guide`
/// when given, otherwise from `vol`. Boundaries are mirrored.
pub fn nlm_filter(vol: &Volume3D, cfg: &NlmConfig, guide: Option<&Volume3D>) -> Volume3D {
    let dist_img = guide.unwrap_or(vol);
    assert_eq!(dist_img.dims(), vol.dims(), "guide dims must match");
    let h = cfg.resolve_h(dist_img, None);
    nlm_with_h(vol, cfg, dist_img, h)
}

pub(crate) fn nlm_with_h(vol: &Volume3D, cfg: &NlmConfig, dist_img: &Volume3D, h: f64) -> Volume3D {
    let d = vol.dims();
    let rs = cfg.search_window / 2;
    let rp = cfg.patch_size / 2;
    let pad = rs + rp;
    let (vp, pd) = pad_reflect(vol, pad);
    let (gp, _) = pad_reflect(dist_img, pad);
    let inv_h2 = 1.0 / (h * h);
    let n = vol.len();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];

    // squared differences over the patch-extended domain
    let ed = [d[0] + 2 * rp, d[1] + 2 * rp, d[2] + 2 * rp];
    let mut diff = vec![0.0; ed[0] * ed[1] * ed[2]];
    let mut sx = vec![0.0; d[0] * ed[1] * ed[2]];
    let mut sxy = vec![0.0; d[0] * d[1] * ed[2]];
    let pidx = |x: usize, y: usize, z: usize| x + pd[0] * (y + pd[1] * z);
    let w = cfg.patch_size;

    let rsi = rs as isize;
    for oz in -rsi..=rsi {
        for oy in -rsi..=rsi {
            for ox in -rsi..=rsi {
                // diff over extended domain: ext coord e maps to padded coord e + rs
                for z in 0..ed[2] {
                    for y in 0..ed[1] {
                        let base = pidx(rs, y + rs, z + rs);
                        let shifted = pidx(
                            (rs as isize + ox) as usize,
                            (y as isize + rsi + oy) as usize,
                            (z as isize + rsi + oz) as usize,
                        );
                        let row = &mut diff[ed[0] * (y + ed[1] * z)..][..ed[0]];
                        for (x, r) in row.iter_mut().enumerate() {
                            let t = gp[base + x] - gp[shifted + x];
                            *r = t * t;
                        }
                    }
                }
                // box sums along x, y, z
                for z in 0..ed[2] {
                    for y in 0..ed[1] {
                        let src = &diff[ed[0] * (y + ed[1] * z)..][..ed[0]];
                        let dst = &mut sx[d[0] * (y + ed[1] * z)..][..d[0]];
                        for (x, o) in dst.iter_mut().enumerate() {
                            *o = src[x..x + w].iter().sum();
                        }
                    }
                }
                for z in 0..ed[2] {
                    for y in 0..d[1] {
                        let dst = d[0] * (y + d[1] * z);
                        for x in 0..d[0] {
                            let mut acc = 0.0;
                            for k in 0..w {
                                acc += sx[x + d[0] * (y + k + ed[1] * z)];
                            }
                            sxy[dst + x] = acc;
                        }
                    }
                }
                for z in 0..d[2] {
                    for y in 0..d[1] {
                        for x in 0..d[0] {
                            let mut dist = 0.0;
                            for k in 0..w {
                                dist += sxy[x + d[0] * (y + d[1] * (z + k))];
                            }
                            let i = x + d[0] * (y + d[1] * z);
                            let wgt = (-dist * inv_h2).exp();
                            let v = vp[pidx(
                                (x as isize + pad as isize + ox) as usize,
                                (y as isize + pad as isize + oy) as usize,
                                (z as isize + pad as isize + oz) as usize,
                            )];
                            num[i] += wgt * v;
                            den[i] += wgt;
                        }
                    }
                }
            }
        }
    }
    let data = num.iter().zip(&den).map(|(a, b)| a / b).collect();
    Volume3D::from_vec(d, data)
        .expect("weighted means of finite data are finite")
        .with_voxel_size(vol.voxel_size())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(dims: [usize; 3], seed: u64) -> Volume3D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume3D::from_fn(dims, |x, _, _| if x < dims[0] / 2 { 1.0 } else { 3.0 } + rng.gen_range(-0.2..0.2))
    }

    #[test]
    fn constant_volume_unchanged() {
        let v = Volume3D::filled([6, 5, 7], 2.5);
        let out = nlm_filter(&v, &NlmConfig { h: Some(0.3), ..Default::default() }, None);
        for &x in out.data() {
            assert!((x - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_h_is_box_mean() {
        let v = noisy([6, 6, 6], 1);
        let cfg = NlmConfig {
            search_window: 3,
            h: Some(1e12),
            ..Default::default()
        };
        let out = nlm_filter(&v, &cfg, None);
        let boxed = super::super::gaussian::box_filter(&v, 3);
        for (a, b) in out.data().iter().zip(boxed.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn guide_controls_weights() {
        // guide separates the halves; output must not mix them
        let v = noisy([8, 4, 4], 2);
        let guide = Volume3D::from_fn([8, 4, 4], |x, _, _| if x < 4 { 0.0 } else { 100.0 });
        let out = nlm_filter(&v, &NlmConfig { h: Some(1.0), ..Default::default() }, Some(&guide));
        for z in 0..4 {
            for y in 0..4 {
                assert!(out.get(0, y, z) < 1.5);
                assert!(out.get(7, y, z) > 2.5);
            }
        }
    }

    #[test]
    fn noise_estimate_is_reasonable() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = rand_distr::Normal::new(0.0, 0.5).unwrap();
        let v = Volume3D::from_fn([24, 24, 24], |_, _, _| rng.sample(normal));
        let s = estimate_noise_sigma(&v);
        assert!((s - 0.5).abs() < 0.05, "{s}");
    }
}
