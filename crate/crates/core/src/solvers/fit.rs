use crate::denoise::gaussian_filter;
use crate::error::{Error, Result};
use crate::kinetics::{adjoint_project, forward_project, ParametricImage, PatlakBasis};
use crate::series::DynamicSeries;
use crate::volume::Volume3D;

/// Floor applied to `x` before each multiplicative update.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

fn check_series(series: &DynamicSeries, basis: &PatlakBasis) -> Result<()> {
    if series.len() != basis.len() {
        return Err(Error::Shape(format!(
            "{} frames for a {}-row basis",
            series.len(),
            basis.len()
        )));
    }
    Ok(())
}

/// Voxel-wise least squares `(BᵀB)⁻¹ Bᵀ y`, unconstrained.
pub fn ls_fit(series: &DynamicSeries, basis: &PatlakBasis) -> Result<ParametricImage> {
    check_series(series, basis)?;
    let g = basis.gram();
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if basis.len() < 2 || !(det.abs() > 1e-12 * g[0][0] * g[1][1]) {
        return Err(Error::SingularBasis(format!(
            "Gram determinant {det:e} with {} frames",
            basis.len()
        )));
    }
    let aty = adjoint_project(series.frames(), basis)?;
    let inv = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
    Ok(ParametricImage {
        kappa: aty.kappa.zip_map(&aty.b, |p, q| inv[0][0] * p + inv[0][1] * q),
        b: aty.kappa.zip_map(&aty.b, |p, q| inv[1][0] * p + inv[1][1] * q),
    })
}

/// Quantities of the data term reused across multiplicative updates:
/// `Aᵀ y` of the clipped frames and the Gram matrix `BᵀB`.
#[derive(Debug, Clone)]
pub struct DataTerm {
    aty: ParametricImage,
    gram: [[f64; 2]; 2],
    clipped: usize,
}

impl DataTerm {
    /// Negative frame values are clipped to zero before projection.
    pub fn new(series: &DynamicSeries, basis: &PatlakBasis) -> Result<Self> {
        check_series(series, basis)?;
        let mut clipped = 0;
        let frames: Vec<Volume3D> = series
            .frames()
            .iter()
            .map(|f| {
                clipped += f.data().iter().filter(|&&v| v < 0.0).count();
                f.map(|v| v.max(0.0))
            })
            .collect();
        Ok(Self {
            aty: adjoint_project(&frames, basis)?,
            gram: basis.gram(),
            clipped,
        })
    }

    /// Number of negative frame samples that were clipped.
    pub fn clipped(&self) -> usize {
        self.clipped
    }

    pub fn aty(&self) -> &ParametricImage {
        &self.aty
    }

    /// `x ← x (Aᵀy + λ v) / (AᵀA x + λ x)`. Returns the update and the number
    /// of voxels whose denominator vanished; those keep their floored value.
    pub fn mm_step(
        &self,
        x: &ParametricImage,
        v: Option<&ParametricImage>,
        lambda: f64,
    ) -> (ParametricImage, usize) {
        let g = self.gram;
        let mut guarded = 0;
        let n = x.kappa.len();
        let mut ko = vec![0.0; n];
        let mut bo = vec![0.0; n];
        let (ak, ab) = (self.aty.kappa.data(), self.aty.b.data());
        for i in 0..n {
            let k = x.kappa.data()[i].max(POSITIVITY_FLOOR);
            let b = x.b.data()[i].max(POSITIVITY_FLOOR);
            let (mut nk, mut nb) = (ak[i], ab[i]);
            let mut dk = g[0][0] * k + g[0][1] * b;
            let mut db = g[1][0] * k + g[1][1] * b;
            if let Some(v) = v {
                nk += lambda * v.kappa.data()[i];
                nb += lambda * v.b.data()[i];
                dk += lambda * k;
                db += lambda * b;
            }
            ko[i] = if dk > 0.0 {
                k * nk.max(0.0) / dk
            } else {
                guarded += 1;
                k
            };
            bo[i] = if db > 0.0 {
                b * nb.max(0.0) / db
            } else {
                guarded += 1;
                b
            };
        }
        let dims = x.dims();
        let vs = x.kappa.voxel_size();
        let wrap = |d: Vec<f64>| {
            Volume3D::from_vec(dims, d)
                .expect("multiplicative update of finite inputs is finite")
                .with_voxel_size(vs)
        };
        (
            ParametricImage {
                kappa: wrap(ko),
                b: wrap(bo),
            },
            guarded,
        )
    }
}

/// One multiplicative update of the penalized least-squares subproblem
/// `½‖y − A x‖² + λ/2 ‖x − v‖²`.
pub fn mm_update(
    x: &ParametricImage,
    v: &ParametricImage,
    series: &DynamicSeries,
    basis: &PatlakBasis,
    lambda: f64,
) -> Result<ParametricImage> {
    x.check_dims(series.dims(), "mm_update x")?;
    v.check_dims(series.dims(), "mm_update v")?;
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("penalty {lambda} must be non-negative")));
    }
    let data = DataTerm::new(series, basis)?;
    Ok(data.mm_step(x, Some(v), lambda).0)
}

/// Unpenalized multiplicative fit from all-ones followed by Gaussian
/// smoothing of both channels (`fwhm_voxels = 0` skips smoothing).
pub fn baseline_fit(
    series: &DynamicSeries,
    basis: &PatlakBasis,
    iters: usize,
    fwhm_voxels: f64,
) -> Result<ParametricImage> {
    let data = DataTerm::new(series, basis)?;
    if data.clipped() > 0 {
        log::info!("baseline fit: clipped {} negative frame samples", data.clipped());
    }
    let mut x = ParametricImage::filled(series.dims(), 1.0, 1.0);
    let mut guarded = 0;
    for _ in 0..iters {
        let (next, g) = data.mm_step(&x, None, 0.0);
        x = next;
        guarded += g;
    }
    if guarded > 0 {
        log::warn!("baseline fit: {guarded} voxel updates hit a zero denominator");
    }
    Ok(x.map_channels(|_, v| gaussian_filter(v, fwhm_voxels)))
}

/// `½‖y − A x‖²` against the unclipped frames.
pub fn data_fidelity(x: &ParametricImage, series: &DynamicSeries, basis: &PatlakBasis) -> Result<f64> {
    check_series(series, basis)?;
    x.check_dims(series.dims(), "data_fidelity")?;
    let mut acc = 0.0;
    for (y, &[s, c]) in series.frames().iter().zip(basis.rows()) {
        for ((&yv, &k), &b) in y.data().iter().zip(x.kappa.data()).zip(x.b.data()) {
            let r = yv - s * k - c * b;
            acc += r * r;
        }
    }
    Ok(0.5 * acc)
}

/// Gradient of `‖y − A x‖² / σ²`, that is `(2/σ²) Aᵀ(A x − y)`.
pub fn likelihood_grad(
    x: &ParametricImage,
    series: &DynamicSeries,
    basis: &PatlakBasis,
    sigma2: f64,
) -> Result<ParametricImage> {
    check_series(series, basis)?;
    x.check_dims(series.dims(), "likelihood_grad")?;
    if !(sigma2 > 0.0) {
        return Err(Error::Config(format!("noise variance {sigma2} must be positive")));
    }
    let mut resid = forward_project(x, basis);
    for (r, y) in resid.iter_mut().zip(series.frames()) {
        r.axpy(-1.0, y);
    }
    let mut g = adjoint_project(&resid, basis)?;
    g.scale(2.0 / sigma2);
    Ok(g)
}

/// Fraction of voxels, ranked by the frame mean, treated as background when
/// no mask is given.
pub const BACKGROUND_QUANTILE: f64 = 0.2;

/// Sample variance of the last frame over a background region: `mask` when
/// given, otherwise the voxels whose frame mean lies in the lowest
/// [`BACKGROUND_QUANTILE`].
pub fn estimate_sigma2(series: &DynamicSeries, mask: Option<&[bool]>) -> Result<f64> {
    let last = series.frames().last().expect("series is nonempty");
    let selected: Vec<f64> = match mask {
        Some(m) => {
            if m.len() != last.len() {
                return Err(Error::Shape("background mask length".into()));
            }
            last.data().iter().zip(m).filter(|(_, &k)| k).map(|(&v, _)| v).collect()
        }
        None => {
            let mut mean = Volume3D::zeros(series.dims());
            for f in series.frames() {
                mean.axpy(1.0 / series.len() as f64, f);
            }
            let cut = mean.percentile(100.0 * BACKGROUND_QUANTILE);
            last.data()
                .iter()
                .zip(mean.data())
                .filter(|(_, &m)| m <= cut)
                .map(|(&v, _)| v)
                .collect()
        }
    };
    if selected.len() < 2 {
        return Err(Error::Degenerate("background region has fewer than 2 voxels".into()));
    }
    let n = selected.len() as f64;
    let mu = selected.iter().sum::<f64>() / n;
    let var = selected.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::Degenerate("background variance is zero".into()));
    }
    Ok(var)
}
