//! Grid execution.
//!
//! Cells are enumerated in the fixed order surface kind × n × noise scale ×
//! method × normal × conv × offset radius × samples × mask, with seeds
//! innermost. Parameters a method does not use are left empty. Each cell runs
//! its per-point work on the sweep's thread pool, so the output never
//! depends on the worker count.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::metrics::{curvature_mse, mse, normal_report, sign_agreement, CurvatureKind, MseMode};
use crate::neighborhood::SpatialIndex;
use crate::noise::add_noise;
use crate::normals::{pca_frames, vcm_frames, TangentFrame};
use crate::pointcloud::{fmt_real, GroundTruth, PointCloud};
use crate::surfaces::{sample_hypersphere, sample_torus};
use crate::vcm::{convolve_vcm, mcvcm_with, sample_schedule, McvcmVariant};
use crate::weingarten::{curvatures, vwme, wme_pca, Curvature, VwmeParams};

use super::config::{ExperimentConfig, Method, NeighborhoodRule, SurfaceKind, Task};

/// One grid cell at one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Index of the parameter combination; shared by all its seeds.
    pub id: usize,
    pub surface: SurfaceKind,
    pub n: usize,
    pub noise_scale: f64,
    pub method: Method,
    pub normal: Option<NeighborhoodRule>,
    pub conv: Option<NeighborhoodRule>,
    pub mask: Option<NeighborhoodRule>,
    pub offset_radius: Option<f64>,
    pub vcm_samples: Option<usize>,
    pub seed: u64,
}

/// Per-point output of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PointValue {
    pub index: usize,
    pub coords: Vec<f64>,
    pub truth: f64,
    /// `None` for failed points.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    /// Metric name and value, in [`ExperimentConfig::metric_columns`] order.
    pub metrics: Vec<(&'static str, f64)>,
    pub failure_rate: f64,
    /// Fatal error that prevented the cell from producing metrics.
    pub error: Option<String>,
    pub points: Vec<PointValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: usize,
    pub fatal_errors: usize,
    /// Rows with at least one failed point.
    pub partial_failures: usize,
    pub results: PathBuf,
}

fn opt<T: Clone>(used: bool, values: &[T]) -> Vec<Option<T>> {
    if used {
        values.iter().cloned().map(Some).collect()
    } else {
        vec![None]
    }
}

/// All cells of the sweep in output order.
pub fn grid(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let est = &cfg.estimator;
    let mut cells = Vec::new();
    let mut id = 0;
    for &surface in &cfg.surface.kind {
        for &n in &cfg.surface.n {
            let samples = if est.vcm_samples.is_empty() {
                vec![sample_schedule(n, est.schedule_eps, est.schedule_constant)?]
            } else {
                est.vcm_samples.clone()
            };
            for &noise_scale in &cfg.noise.scale {
                for &method in &est.methods {
                    for normal in opt(method.uses_normal(), &est.normal) {
                        for conv in opt(method.uses_vcm(), &est.conv) {
                            for offset_radius in opt(method.uses_vcm(), &est.offset_radius) {
                                for vcm_samples in opt(method.uses_vcm(), &samples) {
                                    for mask in opt(method.uses_mask(), &est.mask) {
                                        for &seed in &cfg.seeds {
                                            cells.push(Cell {
                                                id,
                                                surface,
                                                n,
                                                noise_scale,
                                                method,
                                                normal,
                                                conv,
                                                mask,
                                                offset_radius,
                                                vcm_samples,
                                                seed,
                                            });
                                        }
                                        id += 1;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(cells)
}

fn sample_surface(cfg: &ExperimentConfig, cell: &Cell) -> Result<(PointCloud, GroundTruth)> {
    let (clean, truth) = match cell.surface {
        SurfaceKind::Hypersphere => sample_hypersphere(cell.n, cfg.surface.dim, cfg.surface.radius, cell.seed)?,
        kind => sample_torus(cell.n, &cfg.surface.torus(kind), cell.seed)?,
    };
    let cloud = if cell.noise_scale > 0.0 {
        add_noise(&clean, cfg.noise.kind_at(cell.noise_scale)?, cell.seed)?
    } else {
        clean
    };
    Ok((cloud, truth))
}

fn missing(what: &str) -> Error {
    Error::InvalidInput(format!("surface provides no ground-truth {what}"))
}

fn param<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("cell is missing {name}")))
}

fn normal_frames(cfg: &ExperimentConfig, cell: &Cell, index: &SpatialIndex) -> Result<Vec<Result<TangentFrame>>> {
    let m = cfg.estimator.m;
    match cell.method {
        Method::Pca => {
            let spec = param(cell.normal, "normal")?.resolve(cell.n)?;
            spec.validate()?;
            Ok(pca_frames(index, &spec, m))
        }
        Method::Vcm => {
            let field = mcvcm_with(
                index,
                param(cell.offset_radius, "offset_radius")?,
                param(cell.vcm_samples, "vcm_samples")?,
                cell.seed,
                McvcmVariant::Corrected,
            )?;
            let conv = convolve_vcm(&field, index, &param(cell.conv, "conv")?.resolve(cell.n)?)?;
            Ok(vcm_frames(&conv, m, true))
        }
        other => Err(Error::Config(format!("{} is not a normal estimator", other.name()))),
    }
}

fn curvature_field(cfg: &ExperimentConfig, cell: &Cell, index: &SpatialIndex) -> Result<(Vec<Result<Curvature>>, usize)> {
    let est = &cfg.estimator;
    let mask = param(cell.mask, "mask")?.resolve(cell.n)?;
    let field = match cell.method {
        Method::Wme => wme_pca(index, &param(cell.normal, "normal")?.resolve(cell.n)?, &mask, est.m, est.ridge)?,
        Method::Vwme => vwme(
            index,
            &VwmeParams {
                offset_radius: param(cell.offset_radius, "offset_radius")?,
                vcm_samples: param(cell.vcm_samples, "vcm_samples")?,
                seed: cell.seed,
                conv: param(cell.conv, "conv")?.resolve(cell.n)?,
                mask,
                m: est.m,
                ridge: est.ridge,
            },
        )?,
        other => return Err(Error::Config(format!("{} is not a curvature estimator", other.name()))),
    };
    Ok((curvatures(&field), field.ridge_fallbacks()))
}

fn pick(cfg: &ExperimentConfig, all: Vec<(&'static str, f64)>) -> Vec<(&'static str, f64)> {
    let cols = cfg.metric_columns();
    all.into_iter().filter(|(k, _)| cols.contains(k)).collect()
}

fn evaluate(cfg: &ExperimentConfig, cell: &Cell) -> Result<CellResult> {
    let (cloud, truth) = sample_surface(cfg, cell)?;
    let index = SpatialIndex::new(&cloud);
    let n = cloud.len() as f64;
    let coords = |i: usize| cloud.point(i).to_vec();
    match cfg.task {
        Task::Normals => {
            let normals = truth.normals.as_ref().ok_or_else(|| missing("normals"))?;
            let frames = normal_frames(cfg, cell, &index)?;
            let report = normal_report(&frames, normals)?;
            let points = report
                .cosines
                .iter()
                .enumerate()
                .map(|(i, &c)| PointValue {
                    index: i,
                    coords: coords(i),
                    truth: 1.0,
                    value: c,
                })
                .collect();
            Ok(CellResult {
                metrics: pick(
                    cfg,
                    vec![
                        ("mean_cos", report.mean_cosine),
                        ("mean_abs_cos", report.mean_abs_cosine),
                        ("flip_fraction", report.flip_fraction),
                    ],
                ),
                failure_rate: report.failed as f64 / n,
                error: None,
                points,
            })
        }
        Task::Curvature => {
            let h = truth.mean_curvature.as_ref().ok_or_else(|| missing("mean curvature"))?;
            let k = truth.gaussian_curvature.as_ref().ok_or_else(|| missing("Gaussian curvature"))?;
            let (curv, ridges) = curvature_field(cfg, cell, &index)?;
            // Estimates use S(v) = -dζ(v); the ground truth has the outward
            // sphere at H = +1, so signed comparisons negate the estimate.
            let outward: Vec<Option<f64>> = curv.iter().map(|c| c.as_ref().ok().map(|c| -c.mean)).collect();
            let neg_h: Vec<f64> = h.iter().map(|x| -x).collect();
            let h_abs = curvature_mse(&curv, h, CurvatureKind::Mean, MseMode::Absolute)?;
            let h_signed = mse(&outward, h, MseMode::Signed)?;
            let k_abs = curvature_mse(&curv, k, CurvatureKind::Gaussian, MseMode::Absolute)?;
            let points = outward
                .iter()
                .enumerate()
                .map(|(i, &v)| PointValue {
                    index: i,
                    coords: coords(i),
                    truth: h[i],
                    value: v,
                })
                .collect();
            Ok(CellResult {
                metrics: pick(
                    cfg,
                    vec![
                        ("mse_h_abs", h_abs.mse),
                        ("mse_h_signed", h_signed.mse),
                        ("mse_k_abs", k_abs.mse),
                        ("sign_agreement", sign_agreement(&curv, &neg_h)?),
                        ("ridge_rate", ridges as f64 / n),
                    ],
                ),
                failure_rate: h_abs.failure_rate(),
                error: None,
                points,
            })
        }
    }
}

/// Runs one cell. Errors that stop the whole cell are reported in
/// [`CellResult::error`] with NaN metrics and a failure rate of 1.
pub fn run_cell(cfg: &ExperimentConfig, cell: &Cell) -> CellResult {
    evaluate(cfg, cell).unwrap_or_else(|e| CellResult {
        metrics: cfg.metric_columns().into_iter().map(|k| (k, f64::NAN)).collect(),
        failure_rate: 1.0,
        error: Some(e.to_string()),
        points: Vec::new(),
    })
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Header of `results.csv`.
pub fn result_header(cfg: &ExperimentConfig) -> Vec<String> {
    let mut h: Vec<String> = [
        "cell",
        "surface",
        "n",
        "noise",
        "noise_scale",
        "method",
        "normal_nbhd",
        "conv_nbhd",
        "mask_nbhd",
        "offset_radius",
        "vcm_samples",
        "seed",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(cfg.metric_columns().iter().map(|s| s.to_string()));
    h.push("failure_rate".into());
    h.push("error".into());
    h
}

fn result_record(cfg: &ExperimentConfig, cell: &Cell, res: &CellResult) -> Vec<String> {
    let mut r = vec![
        cell.id.to_string(),
        cell.surface.name().to_string(),
        cell.n.to_string(),
        cfg.noise.kind.clone(),
        cell.noise_scale.to_string(),
        cell.method.name().to_string(),
        fmt_opt(&cell.normal),
        fmt_opt(&cell.conv),
        fmt_opt(&cell.mask),
        fmt_opt(&cell.offset_radius),
        fmt_opt(&cell.vcm_samples),
        cell.seed.to_string(),
    ];
    r.extend(res.metrics.iter().map(|(_, v)| fmt_real(*v)));
    r.push(fmt_real(res.failure_rate));
    r.push(res.error.clone().unwrap_or_default());
    r
}

/// Runs every cell and writes `results.csv` and `timings.csv` (plus
/// `points.csv` when `output.per_point` is set) into `out_dir`.
///
/// `points.csv` has one row per point: the first three coordinates, the
/// truth and the estimate (signed cosine for normals; mean curvature in the
/// ground-truth sign convention for curvature, with `sq_error` on |H|).
///
/// Rows are flushed as they complete. Wall times live in `timings.csv` so
/// that `results.csv` is byte-identical across runs. `threads = None` uses
/// the global rayon pool.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>, threads: Option<usize>) -> Result<SweepSummary> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let cells = grid(cfg)?;

    let results_path = out_dir.join("results.csv");
    let mut results = csv::Writer::from_path(&results_path)?;
    results.write_record(result_header(cfg))?;
    let mut timings = csv::Writer::from_path(out_dir.join("timings.csv"))?;
    timings.write_record(["cell", "seed", "wall_seconds"])?;
    let mut points = if cfg.output.per_point {
        let mut w = csv::Writer::from_path(out_dir.join("points.csv"))?;
        w.write_record([
            "cell",
            "surface",
            "n",
            "noise_scale",
            "method",
            "seed",
            "index",
            "x0",
            "x1",
            "x2",
            "truth",
            "value",
            "sq_error",
        ])?;
        Some(w)
    } else {
        None
    };

    let pool = match threads {
        Some(t) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?,
        ),
        None => None,
    };

    let mut summary = SweepSummary {
        rows: 0,
        fatal_errors: 0,
        partial_failures: 0,
        results: results_path,
    };
    for cell in &cells {
        let start = Instant::now();
        let res = match &pool {
            Some(p) => p.install(|| run_cell(cfg, cell)),
            None => run_cell(cfg, cell),
        };
        let wall = start.elapsed().as_secs_f64();

        results.write_record(result_record(cfg, cell, &res))?;
        results.flush()?;
        timings.write_record([cell.id.to_string(), cell.seed.to_string(), format!("{wall:.6}")])?;
        timings.flush()?;
        if let Some(w) = points.as_mut() {
            for p in &res.points {
                let c = |k: usize| p.coords.get(k).map(|&x| fmt_real(x)).unwrap_or_default();
                let sq_error = match (cfg.task, p.value) {
                    (Task::Curvature, Some(v)) => fmt_real((v.abs() - p.truth.abs()).powi(2)),
                    _ => String::new(),
                };
                w.write_record([
                    cell.id.to_string(),
                    cell.surface.name().to_string(),
                    cell.n.to_string(),
                    cell.noise_scale.to_string(),
                    cell.method.name().to_string(),
                    cell.seed.to_string(),
                    p.index.to_string(),
                    c(0),
                    c(1),
                    c(2),
                    fmt_real(p.truth),
                    p.value.map(fmt_real).unwrap_or_default(),
                    sq_error,
                ])?;
            }
            w.flush()?;
        }

        summary.rows += 1;
        if res.error.is_some() {
            summary.fatal_errors += 1;
        } else if res.failure_rate > 0.0 {
            summary.partial_failures += 1;
        }
    }
    Ok(summary)
}

/// Writes a human-readable one-line-per-row digest of a sweep to `out`.
pub fn describe(cfg: &ExperimentConfig, out: &mut impl Write) -> Result<()> {
    let cells = grid(cfg)?;
    writeln!(
        out,
        "{}: {} rows ({} cells x {} seeds), task {:?}",
        cfg.name,
        cells.len(),
        cells.len() / cfg.seeds.len(),
        cfg.seeds.len(),
        cfg.task
    )?;
    if !cfg.description.is_empty() {
        writeln!(out, "{}", cfg.description.trim())?;
    }
    Ok(())
}

/// Opens `path` for writing, creating parent directories.
pub(crate) fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}
