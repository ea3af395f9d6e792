use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use patlak_cli::config::{Axis, ExperimentConfig, MethodConfig, MethodKind};
use patlak_cli::error::{CliError, CliResult};
use patlak_cli::experiment::{method_seed, noise_seed, write_image};
use patlak_cli::pipeline::{evaluate, run_method, Study};
use patlak_cli::{emit_slices, run_experiment};
use patlak_core::io::{read_series, read_volume, write_series, write_volume};
use patlak_core::ParametricImage;

#[derive(Parser)]
#[command(name = "patlak", version, about = "Patlak parametric imaging experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the ground-truth κ, b and label volumes.
    Phantom,
    /// Simulate a noisy dynamic series.
    Synthesize {
        #[arg(long, default_value_t = 1.0)]
        dose: f64,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
    },
    /// Apply a classical method (gaussian, nlm or hypr) to a series.
    Denoise {
        #[arg(long)]
        series: PathBuf,
        /// Method name from the config, or a method kind.
        #[arg(long)]
        method: String,
    },
    /// Unsmoothed multiplicative fit of a series.
    FitBaseline {
        #[arg(long)]
        series: PathBuf,
    },
    /// Diffusion posterior sampling.
    SolveDps {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        method: Option<String>,
    },
    /// RED-Diff with half-quadratic splitting.
    SolveReddiff {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        method: Option<String>,
    },
    /// Metrics of a parametric image directory against the phantom.
    Evaluate {
        /// Directory holding kappa.pvol and b.pvol.
        #[arg(long)]
        image: PathBuf,
        /// Series the image was estimated from; its baseline fit normalizes CNR.
        #[arg(long)]
        series: PathBuf,
        /// Normal-dose reference image directory.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// The full method × dose matrix.
    Run,
    /// Export slices of a volume as 8-bit PGM.
    Slices {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, default_value = "z")]
        axis: Axis,
        /// Comma-separated slice indices.
        #[arg(long, value_delimiter = ',', required = true)]
        indices: Vec<usize>,
        /// Display window `lo,hi`.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        window: Vec<f64>,
    },
}

fn load_config(g: &Global) -> CliResult<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn find_method<'a>(cfg: &'a ExperimentConfig, name: &str, allowed: &[&str]) -> CliResult<&'a MethodConfig> {
    let m = cfg
        .methods
        .iter()
        .find(|m| m.label() == name)
        .or_else(|| cfg.methods.iter().find(|m| m.kind.kind_name() == name))
        .ok_or_else(|| CliError::Config(format!("no method {name:?} in the config")))?;
    if !allowed.contains(&m.kind.kind_name()) {
        return Err(CliError::Config(format!(
            "method {name:?} is a {}, expected one of {allowed:?}",
            m.kind.kind_name()
        )));
    }
    Ok(m)
}

fn read_image(dir: &Path) -> CliResult<ParametricImage> {
    Ok(ParametricImage::new(
        read_volume(dir.join("kappa.pvol"))?,
        read_volume(dir.join("b.pvol"))?,
    )?)
}

fn solve(cfg: &ExperimentConfig, series: &Path, method: &MethodConfig) -> CliResult<()> {
    let study = Study::new(cfg)?;
    let series = read_series(series)?;
    let baseline = study.baseline(&series)?;
    let index = cfg.methods.iter().position(|m| m == method).unwrap_or(0);
    let seed = method_seed(cfg.seed, index);
    let out = run_method(&method.kind, &study, &series, &baseline, seed, cfg.threads.max(1))?;
    write_image(&out.image, &cfg.out)?;
    for (i, t) in out.traces.iter().enumerate() {
        let path = cfg.out.join(format!("trace_{i:02}.csv"));
        fs::write(&path, t.to_csv(true)).map_err(|e| CliError::io(&path, e))?;
    }
    println!("{}", cfg.out.display());
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Phantom => {
            let study = Study::new(&cfg)?;
            write_image(&study.phantom.truth, &cfg.out)?;
            write_volume(&study.phantom.labels, cfg.out.join("labels.pvol"))?;
            println!("{}", cfg.out.display());
        }
        Command::Synthesize { dose, replicate } => {
            let study = Study::new(&cfg)?;
            let d = cfg.doses.iter().position(|&x| x == dose).unwrap_or(cfg.doses.len());
            let series = study.synthesize(dose, noise_seed(cfg.seed, d, replicate))?;
            write_series(&series, &cfg.out)?;
            println!("{}", cfg.out.display());
        }
        Command::Denoise { series, method } => {
            let m = find_method(&cfg, &method, &["gaussian", "nlm", "hypr"])?;
            solve(&cfg, &series, m)?;
        }
        Command::FitBaseline { series } => {
            let m = MethodConfig::new(MethodKind::Baseline {
                iters: cfg.baseline_iters,
            });
            solve(&cfg, &series, &m)?;
        }
        Command::SolveDps { series, method } => {
            let m = find_method(&cfg, method.as_deref().unwrap_or("dps"), &["dps"])?;
            solve(&cfg, &series, m)?;
        }
        Command::SolveReddiff { series, method } => {
            let m = find_method(&cfg, method.as_deref().unwrap_or("red-diff"), &["red-diff"])?;
            solve(&cfg, &series, m)?;
        }
        Command::Evaluate {
            image,
            series,
            reference,
        } => {
            let study = Study::new(&cfg)?;
            let img = read_image(&image)?;
            let baseline = study.baseline(&read_series(&series)?)?;
            let reference = reference.as_deref().map(read_image).transpose()?;
            let rows = evaluate(&img, &study, &baseline, reference.as_ref())?;
            let mut csv = String::from("metric,target,value\n");
            for r in rows {
                csv.push_str(&format!("{},{},{:e}\n", r.metric, r.target, r.value));
            }
            fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
            let path = cfg.out.join("metrics.csv");
            fs::write(&path, &csv).map_err(|e| CliError::io(&path, e))?;
            print!("{csv}");
        }
        Command::Run => {
            let report = run_experiment(&cfg)?;
            println!(
                "{} cells, {} failed; results in {}",
                report.manifest.cells.len(),
                report.failed_cells(),
                report.out.display()
            );
        }
        Command::Slices {
            volume,
            axis,
            indices,
            window,
        } => {
            let [lo, hi] = window[..] else {
                return Err(CliError::Config(format!("window needs `lo,hi`, got {window:?}")));
            };
            let vol = read_volume(&volume)?;
            let stem = volume.file_stem().and_then(|s| s.to_str()).unwrap_or("slice");
            for p in emit_slices(&vol, axis, &indices, [lo, hi], &cfg.out, stem)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
