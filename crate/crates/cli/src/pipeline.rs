//! A study (phantom, protocol, basis, ROIs) and the estimation methods
//! that run on it.

use std::sync::Arc;

use patlak_core::denoise::{gaussian_filter, hypr_filter, nlm_filter, GaussianDenoiser, NlmDenoiser};
use patlak_core::diffusion::{ChannelScaling, ScheduleConfig, DenoiserScore, GaussianPriorScore, ScoreModel};
use patlak_core::kinetics::{patlak_basis, FrameTiming, InputFunction, PatlakBasis};
use patlak_core::metrics::{cnr, cnr_improvement, psnr, ssim, RoiSet};
use patlak_core::patch::PatchLayout;
use patlak_core::phantom::{build_phantom, synthesize_series, NoiseModel, Phantom};
use patlak_core::solvers::{
    baseline_fit, dps_sample, estimate_sigma2, hqs_solve_from, hqs_solve_patched, DpsConfig, SolveTrace,
};
use patlak_core::{Channel, DynamicSeries, ParametricImage, Volume3D};

use crate::config::{ExperimentConfig, MethodKind, ScoreConfig};
use crate::error::CliResult;

pub struct Study {
    pub phantom: Phantom,
    pub input: InputFunction,
    pub timing: FrameTiming,
    pub basis: PatlakBasis,
    pub noise: NoiseModel,
    pub rois: RoiSet,
    /// Lesion-free label map used to guide non-local means.
    pub guide: Volume3D,
    pub baseline_iters: usize,
}

impl Study {
    pub fn new(cfg: &ExperimentConfig) -> CliResult<Self> {
        let phantom = build_phantom(&cfg.phantom)?;
        let input = cfg.input_function()?;
        let timing = cfg.frame_timing()?;
        let basis = patlak_basis(&input, &timing, cfg.t_star_min)?;
        let rois = RoiSet::from_phantom(&phantom)?;
        let guide = phantom.anatomy_guide();
        Ok(Self {
            phantom,
            input,
            timing,
            basis,
            noise: cfg.noise,
            rois,
            guide,
            baseline_iters: cfg.baseline_iters,
        })
    }

    pub fn synthesize(&self, dose: f64, seed: u64) -> CliResult<DynamicSeries> {
        let noise = NoiseModel {
            dose_fraction: dose,
            ..self.noise
        };
        Ok(synthesize_series(&self.phantom.truth, &self.basis, &self.timing, &noise, seed)?)
    }

    /// Unsmoothed multiplicative fit.
    pub fn baseline(&self, series: &DynamicSeries) -> CliResult<ParametricImage> {
        Ok(baseline_fit(series, &self.basis, self.baseline_iters, 0.0)?)
    }
}

pub fn build_score(cfg: &ScoreConfig) -> CliResult<Box<dyn ScoreModel>> {
    Ok(match cfg {
        ScoreConfig::GaussianDenoiser { fwhm_voxels } => Box::new(DenoiserScore::new(Arc::new(GaussianDenoiser {
            fwhm_voxels: *fwhm_voxels,
        }))),
        ScoreConfig::NlmDenoiser { nlm } => {
            nlm.validate()?;
            Box::new(DenoiserScore::new(Arc::new(NlmDenoiser {
                config: *nlm,
                guide: None,
            })))
        }
        ScoreConfig::GaussianPrior { mu0, s2 } => Box::new(GaussianPriorScore::new(
            [mu0[0].into(), mu0[1].into()],
            *s2,
        )?),
    })
}

pub struct MethodOutput {
    pub image: ParametricImage,
    pub traces: Vec<SolveTrace>,
}

impl From<ParametricImage> for MethodOutput {
    fn from(image: ParametricImage) -> Self {
        Self {
            image,
            traces: Vec::new(),
        }
    }
}

fn smooth(x: &ParametricImage, fwhm: f64) -> ParametricImage {
    x.map_channels(|_, c| gaussian_filter(c, fwhm))
}

/// Runs one estimation method. `baseline` is the unsmoothed fit of
/// `series` with the study's iteration count.
pub fn run_method(
    kind: &MethodKind,
    study: &Study,
    series: &DynamicSeries,
    baseline: &ParametricImage,
    seed: u64,
    threads: usize,
) -> CliResult<MethodOutput> {
    let basis = &study.basis;
    Ok(match kind {
        MethodKind::Baseline { iters } if *iters == study.baseline_iters => baseline.clone().into(),
        MethodKind::Baseline { iters } => baseline_fit(series, basis, *iters, 0.0)?.into(),
        MethodKind::Gaussian { fwhm_voxels } => smooth(baseline, *fwhm_voxels).into(),
        MethodKind::Nlm { nlm, guide } => {
            nlm.validate()?;
            let g = guide.then_some(&study.guide);
            baseline.map_channels(|_, c| nlm_filter(c, nlm, g)).into()
        }
        MethodKind::Hypr { kernel_size, iters } => {
            let filtered = hypr_filter(series, *kernel_size)?;
            baseline_fit(&filtered, basis, *iters, 0.0)?.into()
        }
        MethodKind::Dps {
            steps,
            sigma2,
            score,
            normalize,
        } => {
            let sched = ScheduleConfig::default().build()?.respaced(*steps)?;
            let sigma2 = match sigma2 {
                Some(s) => *s,
                None => estimate_sigma2(series, None)?,
            };
            let mut cfg = DpsConfig::new(sigma2);
            if *normalize {
                cfg.scaling = ChannelScaling::robust_max(&smooth(baseline, 3.0));
            }
            let score = build_score(score)?;
            dps_sample(series, basis, score.as_ref(), &sched, &cfg, seed)?.into()
        }
        MethodKind::RedDiff {
            solver,
            score,
            patches,
        } => {
            let score = build_score(score)?;
            let sched = solver.schedule.build()?;
            match patches {
                None => {
                    let init = if solver.baseline_iters == study.baseline_iters {
                        smooth(baseline, solver.init_fwhm_voxels)
                    } else {
                        baseline_fit(series, basis, solver.baseline_iters, solver.init_fwhm_voxels)?
                    };
                    let (image, trace) = hqs_solve_from(&init, series, basis, score.as_ref(), &sched, solver, seed)?;
                    MethodOutput {
                        image,
                        traces: vec![trace],
                    }
                }
                Some(p) => {
                    let layout = PatchLayout::tile(series.dims(), p.dims, p.overlap)?;
                    let (image, traces) =
                        hqs_solve_patched(series, basis, score.as_ref(), &sched, solver, seed, &layout, threads)?;
                    MethodOutput { image, traces }
                }
            }
        }
    })
}

/// One metric value. `target` is a lesion label or `"global"`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub target: String,
    pub value: f64,
}

impl MetricRow {
    fn global(metric: &str, value: f64) -> Self {
        Self {
            metric: metric.into(),
            target: "global".into(),
            value,
        }
    }
}

/// Image quality of `image` against the ground truth and, when given, the
/// normal-dose reference; lesion CNR and its improvement over `baseline`;
/// the mean background κ.
pub fn evaluate(
    image: &ParametricImage,
    study: &Study,
    baseline: &ParametricImage,
    reference: Option<&ParametricImage>,
) -> CliResult<Vec<MetricRow>> {
    let truth = &study.phantom.truth;
    let mut rows = Vec::new();
    for c in Channel::ALL {
        let n = c.name();
        rows.push(MetricRow::global(&format!("psnr_{n}_truth"), psnr(image.channel(c), truth.channel(c))?));
        rows.push(MetricRow::global(&format!("ssim_{n}_truth"), ssim(image.channel(c), truth.channel(c))?));
    }
    if let Some(r) = reference {
        let (k, rk) = (image.channel(Channel::Kappa), r.channel(Channel::Kappa));
        rows.push(MetricRow::global("psnr_kappa_reference", psnr(k, rk)?));
        rows.push(MetricRow::global("ssim_kappa_reference", ssim(k, rk)?));
    }
    let kappa = image.channel(Channel::Kappa);
    let labels = study.phantom.lesion_labels();
    let c = cnr(kappa, &study.rois)?;
    let imp = cnr_improvement(kappa, baseline.channel(Channel::Kappa), &study.rois)?;
    for (i, l) in labels.iter().enumerate() {
        let target = format!("lesion{l}");
        rows.push(MetricRow {
            metric: "cnr".into(),
            target: target.clone(),
            value: c[i],
        });
        rows.push(MetricRow {
            metric: "cnr_improvement".into(),
            target,
            value: imp[i],
        });
    }
    rows.push(MetricRow::global(
        "cnr_improvement_mean",
        imp.iter().sum::<f64>() / imp.len() as f64,
    ));
    let bg: Vec<usize> = (0..kappa.len())
        .filter(|&i| study.phantom.labels.data()[i] == 0.0)
        .collect();
    if !bg.is_empty() {
        let mean = bg.iter().map(|&i| kappa.data()[i]).sum::<f64>() / bg.len() as f64;
        rows.push(MetricRow::global("background_kappa", mean));
    }
    Ok(rows)
}

pub fn metric<'a>(rows: &'a [MetricRow], name: &str) -> Option<&'a MetricRow> {
    rows.iter().find(|r| r.metric == name)
}
