//! Experiment configuration, read from a TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use patlak_core::denoise::NlmConfig;
use patlak_core::kinetics::{Frame, FrameTiming, InputFunction, DEFAULT_T_STAR_MIN};
use patlak_core::phantom::{NoiseModel, PhantomSpec};
use patlak_core::solvers::SolverConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Frame timing: one of the named protocols or an explicit frame list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingConfig {
    /// Last five 300 s frames, 35 to 60 minutes.
    Late,
    /// The full 29-frame protocol.
    TotalBody,
    Frames(Vec<Frame>),
}

impl TimingConfig {
    pub fn build(&self) -> CliResult<FrameTiming> {
        Ok(match self {
            TimingConfig::Late => FrameTiming::late_protocol(),
            TimingConfig::TotalBody => FrameTiming::total_body_protocol(),
            TimingConfig::Frames(f) => FrameTiming::new(f.clone())?,
        })
    }
}

/// Score model used by the diffusion-based methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScoreConfig {
    /// Tweedie score of a Gaussian smoothing denoiser.
    GaussianDenoiser { fwhm_voxels: f64 },
    /// Tweedie score of a non-local means denoiser.
    NlmDenoiser {
        #[serde(default)]
        nlm: NlmConfig,
    },
    /// Exact score of an independent Gaussian prior per channel.
    GaussianPrior { mu0: [f64; 2], s2: [f64; 2] },
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig::GaussianDenoiser { fwhm_voxels: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub dims: [usize; 3],
    pub overlap: [usize; 3],
}

fn default_iters() -> usize {
    100
}

fn default_fwhm() -> f64 {
    3.0
}

fn default_hypr_kernel() -> usize {
    3
}

fn default_dps_steps() -> usize {
    200
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodKind {
    /// Multiplicative least-squares fit without post-filtering.
    Baseline {
        #[serde(default = "default_iters")]
        iters: usize,
    },
    /// Baseline fit smoothed with a Gaussian.
    Gaussian {
        #[serde(default = "default_fwhm")]
        fwhm_voxels: f64,
    },
    /// Baseline fit filtered by non-local means, optionally guided by the
    /// lesion-free anatomy.
    Nlm {
        #[serde(default)]
        nlm: NlmConfig,
        #[serde(default)]
        guide: bool,
    },
    /// HYPR-filtered frames, then the baseline fit.
    Hypr {
        #[serde(default = "default_hypr_kernel")]
        kernel_size: usize,
        #[serde(default = "default_iters")]
        iters: usize,
    },
    /// Diffusion posterior sampling on a respaced schedule of `steps`.
    Dps {
        #[serde(default = "default_dps_steps")]
        steps: usize,
        /// Likelihood variance; estimated from the background when absent.
        #[serde(default)]
        sigma2: Option<f64>,
        #[serde(default)]
        score: ScoreConfig,
        /// Sample in the robust-max scaled space of the smoothed baseline.
        #[serde(default = "default_true")]
        normalize: bool,
    },
    /// RED-Diff with half-quadratic splitting.
    RedDiff {
        #[serde(default)]
        solver: SolverConfig,
        #[serde(default)]
        score: ScoreConfig,
        #[serde(default)]
        patches: Option<PatchConfig>,
    },
}

impl MethodKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MethodKind::Baseline { .. } => "baseline",
            MethodKind::Gaussian { .. } => "gaussian",
            MethodKind::Nlm { .. } => "nlm",
            MethodKind::Hypr { .. } => "hypr",
            MethodKind::Dps { .. } => "dps",
            MethodKind::RedDiff { .. } => "red-diff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    /// Label used in reports; defaults to the method kind.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: MethodKind,
}

impl MethodConfig {
    pub fn new(kind: MethodKind) -> Self {
        Self { name: None, kind }
    }

    pub fn named(name: &str, kind: MethodKind) -> Self {
        Self {
            name: Some(name.to_string()),
            kind,
        }
    }

    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or_else(|| self.kind.kind_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "x" | "sagittal" => Ok(Axis::X),
            "y" | "coronal" => Ok(Axis::Y),
            "z" | "axial" => Ok(Axis::Z),
            other => Err(format!("unknown axis {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SliceConfig {
    pub enabled: bool,
    pub axis: Axis,
    /// Slice indices; empty selects the central slice.
    pub indices: Vec<usize>,
    /// Display window for κ; `None` uses `[0, max κ of the ground truth]`.
    pub window: Option<[f64; 2]>,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            axis: Axis::Z,
            indices: Vec::new(),
            window: None,
        }
    }
}

/// Everything needed to rerun an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads for independent cells.
    pub threads: usize,
    /// Noise realizations per dose.
    pub replicates: usize,
    pub phantom: PhantomSpec,
    pub input: InputFunction,
    /// Two-column CSV `(minutes, C_p)` replacing `input` when set. Relative
    /// paths resolve against the config file.
    pub input_file: Option<PathBuf>,
    pub timing: TimingConfig,
    pub t_star_min: f64,
    pub noise: NoiseModel,
    pub doses: Vec<f64>,
    /// Iterations of the baseline fit used for CNR normalization and as the
    /// normal-dose reference image.
    pub baseline_iters: usize,
    pub methods: Vec<MethodConfig>,
    pub slices: SliceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            threads: 1,
            replicates: 1,
            phantom: PhantomSpec::desk_preset(),
            input: InputFunction::default(),
            input_file: None,
            timing: TimingConfig::Late,
            t_star_min: DEFAULT_T_STAR_MIN,
            noise: NoiseModel::default(),
            doses: vec![1.0, 0.1],
            baseline_iters: 100,
            methods: default_methods(),
            slices: SliceConfig::default(),
        }
    }
}

/// The six-method comparison on the desk phantom.
pub fn default_methods() -> Vec<MethodConfig> {
    let mut solver = SolverConfig::default();
    solver.t_start_fraction = 0.1;
    solver.init_fwhm_voxels = 2.0;
    vec![
        MethodConfig::new(MethodKind::Baseline { iters: 100 }),
        MethodConfig::new(MethodKind::Gaussian { fwhm_voxels: 3.0 }),
        MethodConfig::new(MethodKind::Nlm {
            nlm: NlmConfig {
                h: Some(1.0),
                ..NlmConfig::default()
            },
            guide: true,
        }),
        MethodConfig::new(MethodKind::Hypr {
            kernel_size: 3,
            iters: 100,
        }),
        MethodConfig::new(MethodKind::Dps {
            steps: 200,
            sigma2: None,
            score: ScoreConfig::default(),
            normalize: true,
        }),
        MethodConfig::named(
            "proposed",
            MethodKind::RedDiff {
                solver,
                score: ScoreConfig::default(),
                patches: None,
            },
        ),
    ]
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: PathBuf::from("<string>"),
            reason: e.to_string(),
        })
    }

    /// Reads and validates a config file. `input_file` is resolved relative
    /// to the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if let Some(f) = &cfg.input_file {
            if f.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.input_file = Some(base.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.methods.is_empty() {
            return Err(CliError::Config("no methods configured".into()));
        }
        if self.doses.is_empty() {
            return Err(CliError::Config("no dose fractions configured".into()));
        }
        if let Some(d) = self.doses.iter().find(|&&d| !(d > 0.0 && d <= 1.0)) {
            return Err(CliError::Config(format!("dose fraction {d} outside (0, 1]")));
        }
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        let mut labels: Vec<&str> = self.methods.iter().map(|m| m.label()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::Config(format!("duplicate method name {:?}", w[0])));
        }
        if let Some(f) = &self.input_file {
            if !f.is_file() {
                return Err(CliError::Config(format!("input file {} does not exist", f.display())));
            }
        }
        for m in &self.methods {
            match &m.kind {
                MethodKind::RedDiff { solver, .. } => solver.validate()?,
                MethodKind::Nlm { nlm, .. } => nlm.validate()?,
                MethodKind::Hypr { kernel_size, .. } if kernel_size % 2 == 0 => {
                    return Err(CliError::Config("HYPR kernel size must be odd".into()))
                }
                MethodKind::Dps { steps: 0, .. } => {
                    return Err(CliError::Config("DPS needs at least one step".into()))
                }
                _ => {}
            }
        }
        self.phantom.validate()?;
        self.noise.validate()?;
        Ok(())
    }

    /// The input function, read from `input_file` when one is set.
    pub fn input_function(&self) -> CliResult<InputFunction> {
        let Some(path) = &self.input_file else {
            self.input.validate()?;
            return Ok(self.input.clone());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match cols.as_slice() {
                [t, v] => t.parse::<f64>().ok().zip(v.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some((t, v)) => {
                    times.push(t);
                    values.push(v);
                }
                // tolerate a header row
                None if n == 0 => continue,
                None => {
                    return Err(CliError::Parse {
                        path: path.clone(),
                        reason: format!("line {}: expected `minutes,value`", n + 1),
                    })
                }
            }
        }
        Ok(InputFunction::tabulated(times, values)?)
    }

    /// Frames that start at or after `t*`.
    pub fn frame_timing(&self) -> CliResult<FrameTiming> {
        let all = self.timing.build()?;
        let late: Vec<Frame> = all
            .frames()
            .iter()
            .copied()
            .filter(|f| f.start_s / 60.0 >= self.t_star_min)
            .collect();
        if late.len() < 2 {
            return Err(CliError::Config(format!(
                "{} frames start after t* = {} min; at least 2 are needed",
                late.len(),
                self.t_star_min
            )));
        }
        if late.len() < all.len() {
            log::info!("using the {} frames after t* of {}", late.len(), all.len());
        }
        Ok(FrameTiming::new(late)?)
    }

    /// Canonical TOML rendering.
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> CliResult<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
