//! The method × dose × replicate matrix with per-cell outputs and a manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use patlak_core::io::write_volume;
use patlak_core::metrics::ttest_independent;
use patlak_core::rng::derive_seed;
use patlak_core::{Channel, ParametricImage};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{evaluate, run_method, MetricRow, Study};
use crate::slices::emit_slices;

const REFERENCE_TAG: u64 = u64::MAX;

/// Noise seed shared by every method at one (dose, replicate).
pub fn noise_seed(seed: u64, dose_index: usize, replicate: usize) -> u64 {
    derive_seed(seed, ((dose_index as u64) << 32) | replicate as u64)
}

/// Seed of the stochastic part of method `method_index` in one cell.
pub fn method_seed(noise_seed: u64, method_index: usize) -> u64 {
    derive_seed(noise_seed, method_index as u64 + 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTimes {
    pub synthesize_s: f64,
    pub baseline_s: f64,
    pub method_s: f64,
    pub evaluate_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub method: String,
    pub dose: f64,
    pub replicate: usize,
    pub noise_seed: u64,
    pub method_seed: u64,
    pub dir: String,
    pub status: String,
    pub error: Option<String>,
    pub wall: Option<StageTimes>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool_version: String,
    pub core_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub reference_noise_seed: u64,
    pub cells: Vec<CellRecord>,
    pub total_wall_s: f64,
}

/// Metric values of one cell, in cell order.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: String,
    pub dose: f64,
    pub replicate: usize,
    pub metrics: Vec<MetricRow>,
}

pub struct Report {
    pub out: PathBuf,
    pub manifest: Manifest,
    pub results: Vec<CellResult>,
}

impl Report {
    pub fn failed_cells(&self) -> usize {
        self.manifest.cells.iter().filter(|c| c.status != "ok").count()
    }
}

struct Cell {
    method_index: usize,
    dose_index: usize,
    replicate: usize,
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_image(x: &ParametricImage, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_volume(x.channel(Channel::Kappa), dir.join("kappa.pvol"))?;
    write_volume(x.channel(Channel::Intercept), dir.join("b.pvol"))?;
    Ok(())
}

fn cell_dir(label: &str, dose: f64, replicate: usize) -> String {
    format!("{label}_dose{dose}_r{replicate:02}")
}

fn default_slice(study: &Study, cfg: &ExperimentConfig) -> (Vec<usize>, [f64; 2]) {
    let axis = cfg.slices.axis.index();
    let indices = if cfg.slices.indices.is_empty() {
        vec![study.phantom.truth.dims()[axis] / 2]
    } else {
        cfg.slices.indices.clone()
    };
    let window = cfg
        .slices
        .window
        .unwrap_or([0.0, study.phantom.truth.channel(Channel::Kappa).max()]);
    (indices, window)
}

/// Runs every (dose, method, replicate) cell. A failing cell is recorded in
/// the manifest and the remaining cells still run. Outputs land in
/// `cfg.out`: `metrics.csv`, `summary.csv`, `manifest.json`, the resolved
/// `config.toml`, ground truth, and one directory per cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Report> {
    cfg.validate()?;
    let started = Instant::now();
    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write_text(&out.join("config.toml"), &cfg.to_toml()?)?;

    let study = Study::new(cfg)?;
    write_image(&study.phantom.truth, &out.join("truth"))?;
    write_volume(&study.phantom.labels, out.join("truth").join("labels.pvol"))?;
    let (slice_idx, window) = default_slice(&study, cfg);

    let reference_seed = derive_seed(cfg.seed, REFERENCE_TAG);
    let reference = study.baseline(&study.synthesize(1.0, reference_seed)?)?;
    write_image(&reference, &out.join("reference"))?;

    let mut cells = Vec::new();
    for dose_index in 0..cfg.doses.len() {
        for method_index in 0..cfg.methods.len() {
            for replicate in 0..cfg.replicates {
                cells.push(Cell {
                    method_index,
                    dose_index,
                    replicate,
                });
            }
        }
    }

    let threads = cfg.threads.max(1).min(cells.len());
    let inner_threads = if threads > 1 { 1 } else { cfg.threads.max(1) };
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<(CellRecord, Option<Vec<MetricRow>>)>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(cell) = cells.get(i) else { break };
        let rec = run_cell(cfg, &study, &reference, cell, inner_threads, &out, &slice_idx, window);
        *slots[i].lock().expect("cell slot") = Some(rec);
    };
    std::thread::scope(|s| {
        for _ in 1..threads {
            s.spawn(worker);
        }
        worker();
    });

    let mut records = Vec::with_capacity(cells.len());
    let mut results = Vec::new();
    for slot in slots {
        let (rec, metrics) = slot.into_inner().expect("cell slot").expect("every cell ran");
        if let Some(metrics) = metrics {
            results.push(CellResult {
                method: rec.method.clone(),
                dose: rec.dose,
                replicate: rec.replicate,
                metrics,
            });
        }
        records.push(rec);
    }

    write_text(&out.join("metrics.csv"), &metrics_csv(&results))?;
    write_text(&out.join("summary.csv"), &summary_csv(cfg, &results))?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: patlak_core::VERSION.to_string(),
        config_sha256: cfg.hash()?,
        seed: cfg.seed,
        threads,
        reference_noise_seed: reference_seed,
        cells: records,
        total_wall_s: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    write_text(&out.join("manifest.json"), &json)?;
    Ok(Report {
        out,
        manifest,
        results,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    study: &Study,
    reference: &ParametricImage,
    cell: &Cell,
    threads: usize,
    out: &Path,
    slice_idx: &[usize],
    window: [f64; 2],
) -> (CellRecord, Option<Vec<MetricRow>>) {
    let method = &cfg.methods[cell.method_index];
    let dose = cfg.doses[cell.dose_index];
    let nseed = noise_seed(cfg.seed, cell.dose_index, cell.replicate);
    let mseed = method_seed(nseed, cell.method_index);
    let dir = cell_dir(method.label(), dose, cell.replicate);
    let mut rec = CellRecord {
        method: method.label().to_string(),
        dose,
        replicate: cell.replicate,
        noise_seed: nseed,
        method_seed: mseed,
        dir: format!("cells/{dir}"),
        status: "ok".into(),
        error: None,
        wall: None,
    };
    let run = || -> CliResult<(Vec<MetricRow>, StageTimes)> {
        let t0 = Instant::now();
        let series = study.synthesize(dose, nseed)?;
        let t1 = Instant::now();
        let baseline = study.baseline(&series)?;
        let t2 = Instant::now();
        let result = run_method(&method.kind, study, &series, &baseline, mseed, threads)?;
        let t3 = Instant::now();
        let metrics = evaluate(&result.image, study, &baseline, Some(reference))?;
        let t4 = Instant::now();

        let cdir = out.join("cells").join(&dir);
        write_image(&result.image, &cdir)?;
        for (i, trace) in result.traces.iter().enumerate() {
            let name = if result.traces.len() == 1 {
                "trace.csv".to_string()
            } else {
                format!("trace_patch{i:02}.csv")
            };
            write_text(&cdir.join(name), &trace.to_csv(false))?;
        }
        if cfg.slices.enabled {
            emit_slices(
                result.image.channel(Channel::Kappa),
                cfg.slices.axis,
                slice_idx,
                window,
                &cdir,
                "kappa",
            )?;
        }
        let times = StageTimes {
            synthesize_s: (t1 - t0).as_secs_f64(),
            baseline_s: (t2 - t1).as_secs_f64(),
            method_s: (t3 - t2).as_secs_f64(),
            evaluate_s: (t4 - t3).as_secs_f64(),
        };
        Ok((metrics, times))
    };
    match run() {
        Ok((metrics, times)) => {
            log::info!("cell {dir} finished in {:.1} s", times.method_s);
            rec.wall = Some(times);
            (rec, Some(metrics))
        }
        Err(e) => {
            log::error!("cell {dir} failed: {e}");
            rec.status = "error".into();
            rec.error = Some(e.to_string());
            (rec, None)
        }
    }
}

fn metrics_csv(results: &[CellResult]) -> String {
    let mut s = String::from("method,dose,replicate,metric,target,value\n");
    for r in results {
        for m in &r.metrics {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:e}",
                r.method, r.dose, r.replicate, m.metric, m.target, m.value
            );
        }
    }
    s
}

/// Per (method, dose, metric, target): mean and sample standard deviation
/// over replicates, plus Welch p-values against every other method at the
/// same dose (empty when fewer than two replicates exist).
fn summary_csv(cfg: &ExperimentConfig, results: &[CellResult]) -> String {
    let labels: Vec<&str> = cfg.methods.iter().map(|m| m.label()).collect();
    // (dose index, metric, target) -> method -> values
    type Key = (usize, String, String);
    let mut table: BTreeMap<Key, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in results {
        let d = cfg.doses.iter().position(|&d| d == r.dose).unwrap_or(0);
        let method = labels.iter().find(|&&l| l == r.method).copied().unwrap_or("");
        for m in &r.metrics {
            table
                .entry((d, m.metric.clone(), m.target.clone()))
                .or_default()
                .entry(method)
                .or_default()
                .push(m.value);
        }
    }
    let mut s = String::from("method,dose,metric,target,n,mean,std");
    for l in &labels {
        let _ = write!(s, ",p_vs_{l}");
    }
    s.push('\n');
    for ((d, metric, target), by_method) in &table {
        for l in &labels {
            let Some(vals) = by_method.get(l) else { continue };
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let _ = write!(s, "{l},{},{metric},{target},{n},{mean:e},{std:e}", cfg.doses[*d]);
            for other in &labels {
                s.push(',');
                if other == l {
                    continue;
                }
                if let Some(o) = by_method.get(other) {
                    if let Ok(t) = ttest_independent(vals, o) {
                        let _ = write!(s, "{:e}", t.p);
                    }
                }
            }
            s.push('\n');
        }
    }
    s
}
