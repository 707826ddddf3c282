use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shapeop::harness::{self, ExperimentConfig, PlotKind, PlotSpec};
use shapeop::metrics::normal_report;
use shapeop::pointcloud::fmt_real;
use shapeop::vcm::save_tensor_field;
use shapeop::*;

#[derive(Parser)]
#[command(name = "shapeop", version, about = "Normal, Weingarten map and curvature estimation on point clouds")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SHAPEOP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic surface with ground-truth labels.
    Generate(GenerateArgs),
    /// Add noise to a cloud; label columns are kept.
    Noise(NoiseArgs),
    /// Estimate per-point normals.
    Normals(NormalsArgs),
    /// Monte-Carlo Voronoi covariance measure per point.
    Vcm(VcmArgs),
    /// Estimate shape operators and curvatures.
    Estimate(EstimateArgs),
    /// Run an experiment grid from a TOML config.
    Sweep(SweepArgs),
    /// Render a CSV table as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SurfaceArg {
    Torus,
    TorusSectional,
    Hypersphere,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    surface: SurfaceArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Torus major radius.
    #[arg(long = "Rmaj", default_value_t = 2.0)]
    rmaj: f64,
    /// Torus minor radius.
    #[arg(long, default_value_t = 1.0)]
    rmin: f64,
    /// Hypersphere ambient dimension.
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Hypersphere radius.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Upper end of the θ range (sectional torus).
    #[arg(long)]
    theta_max: Option<f64>,
    /// Upper end of the φ range (sectional torus, default 3π/2).
    #[arg(long)]
    phi_max: Option<f64>,
    /// Sample uniformly by area instead of by parameter.
    #[arg(long)]
    area_uniform: bool,
    #[arg(long, short)]
    out: PathBuf,
    /// csv or xyz; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<CloudFormat>,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value = "gaussian")]
    kind: String,
    /// σ for Gaussian noise, α for uniform noise on [−α, α].
    #[arg(long)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Neighborhood selection shared by several commands. `--k`, `--eps` and
/// `--bandwidth` are mutually exclusive.
#[derive(Args)]
struct Nbhd {
    /// k nearest neighbors.
    #[arg(long, conflicts_with_all = ["eps", "bandwidth"])]
    k: Option<usize>,
    /// ε-ball radius.
    #[arg(long, conflicts_with = "bandwidth")]
    eps: Option<f64>,
    /// Gaussian kernel bandwidth (cut off at 3 bandwidths).
    #[arg(long)]
    bandwidth: Option<f64>,
}

impl Nbhd {
    fn spec(&self, default_k: usize) -> Result<NeighborhoodSpec> {
        match (self.k, self.eps, self.bandwidth) {
            (_, Some(e), _) => NeighborhoodSpec::eps_ball(e),
            (_, _, Some(h)) => NeighborhoodSpec::gaussian(h),
            (k, _, _) => NeighborhoodSpec::knn(k.unwrap_or(default_k)),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormalMethod {
    Pca,
    Vcm,
}

#[derive(Args)]
struct VcmParams {
    /// VCM offset radius R.
    #[arg(long = "R", default_value_t = 0.5)]
    r: f64,
    /// Monte-Carlo samples; default from the schedule |K| ln(1/ε) / ε².
    #[arg(long)]
    samples: Option<usize>,
    /// ε of the sample schedule.
    #[arg(long, default_value_t = 0.05)]
    schedule_eps: f64,
    /// Multiplier of the sample schedule.
    #[arg(long, default_value_t = 1.0)]
    schedule_constant: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl VcmParams {
    fn samples(&self, n: usize) -> Result<usize> {
        match self.samples {
            Some(s) => Ok(s),
            None => sample_schedule(n, self.schedule_eps, self.schedule_constant),
        }
    }
}

#[derive(Args)]
struct NormalsArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "pca")]
    method: NormalMethod,
    /// PCA neighborhood, or the VCM convolution neighborhood (default 50-NN).
    #[command(flatten)]
    nbhd: Nbhd,
    /// Intrinsic dimension (default: ambient − 1).
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    vcm: VcmParams,
}

#[derive(Args)]
struct VcmArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    vcm: VcmParams,
    /// Convolution neighborhood (`knn:K`, `eps:E`, `gauss:H`); raw field when omitted.
    #[arg(long)]
    conv: Option<NeighborhoodSpec>,
    /// Use the algorithm exactly as printed (nearest point of the ball
    /// center instead of the sample). Degenerate; for comparison only.
    #[arg(long)]
    printed_variant: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ShapeMethod {
    Wme,
    Vwme,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "wme")]
    method: ShapeMethod,
    /// PCA neighbors for the WME normals.
    #[arg(long, default_value_t = 50)]
    normal_k: usize,
    /// kNN least-squares mask.
    #[arg(long, default_value_t = 30, conflicts_with_all = ["eps", "bandwidth"])]
    mask_k: usize,
    /// ε-ball mask instead of kNN.
    #[arg(long, conflicts_with = "bandwidth")]
    eps: Option<f64>,
    /// Gaussian-weighted mask instead of kNN.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// VCM convolution neighbors (VWME).
    #[arg(long, default_value_t = 50)]
    conv_k: usize,
    #[arg(long = "R", default_value_t = 0.5)]
    r: f64,
    /// Monte-Carlo samples (VWME); default from the schedule.
    #[arg(long)]
    vcm_samples: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    schedule_constant: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Intrinsic dimension (default: ambient − 1).
    #[arg(long)]
    m: Option<usize>,
    /// Fixed ridge for the least-squares fallback.
    #[arg(long)]
    ridge: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out/<name>`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print the grid size and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, short)]
    results: PathBuf,
    /// line, histogram or scatter3d-projection.
    #[arg(long)]
    kind: PlotKind,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    y: Option<String>,
    /// Histogram column, or scatter color column.
    #[arg(long)]
    value: Option<String>,
    #[arg(long)]
    group: Option<String>,
    /// Row filter `column=value`; repeatable.
    #[arg(long = "filter", value_parser = harness::parse_filter)]
    filters: Vec<(String, String)>,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long)]
    log_x: bool,
    #[arg(long)]
    log_y: bool,
    #[arg(long)]
    title: Option<String>,
}

fn intrinsic(m: Option<usize>, cloud: &PointCloud) -> usize {
    m.unwrap_or(cloud.dim().saturating_sub(1).max(1))
}

fn load(path: &Path) -> Result<(PointCloud, GroundTruth)> {
    load_labeled(path, CloudFormat::from_path(path))
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let (cloud, truth) = match a.surface {
        SurfaceArg::Hypersphere => sample_hypersphere(a.n, a.dim, a.radius, a.seed)?,
        s => {
            let mut p = match s {
                SurfaceArg::Torus => TorusParams::full(a.rmaj, a.rmin),
                _ => TorusParams::sectional(a.rmaj, a.rmin),
            };
            if let Some(t) = a.theta_max {
                p.theta_range.1 = t;
            }
            if let Some(f) = a.phi_max {
                p.phi_range.1 = f;
            }
            p.area_uniform = a.area_uniform;
            sample_torus(a.n, &p, a.seed)?
        }
    };
    let format = a.format.unwrap_or_else(|| CloudFormat::from_path(&a.out));
    let labels = (format == CloudFormat::Csv).then_some(&truth);
    save_cloud(&cloud, labels, &a.out, format)?;
    eprintln!("wrote {} points to {}", cloud.len(), a.out.display());
    Ok(())
}

fn noise(a: &NoiseArgs) -> Result<()> {
    let (cloud, truth) = load(&a.input)?;
    let noisy = add_noise(&cloud, NoiseKind::parse(&a.kind, a.scale)?, a.seed)?;
    let format = CloudFormat::from_path(&a.out);
    let labels = (format == CloudFormat::Csv).then_some(&truth);
    save_cloud(&noisy, labels, &a.out, format)
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn error_cell(e: &Error) -> String {
    format!("\"{}\"", e.to_string().replace('"', "'"))
}

fn normals(a: &NormalsArgs) -> Result<()> {
    let (cloud, truth) = load(&a.input)?;
    let m = intrinsic(a.m, &cloud);
    let index = build_index(&cloud);
    let spec = a.nbhd.spec(50)?;
    let frames = match a.method {
        NormalMethod::Pca => pca_frames(&index, &spec, m),
        NormalMethod::Vcm => {
            let field = mcvcm_with(&index, a.vcm.r, a.vcm.samples(cloud.len())?, a.vcm.seed, McvcmVariant::Corrected)?;
            vcm_frames(&convolve_vcm(&field, &index, &spec)?, m, true)
        }
    };
    let dim = cloud.dim();
    let codim = dim - m;
    let mut header = vec!["index".to_string()];
    for c in 0..codim {
        for k in 0..dim {
            header.push(if codim == 1 { format!("n{k}") } else { format!("n{c}_{k}") });
        }
    }
    header.push("error".into());
    let rows = frames.iter().enumerate().map(|(i, f)| {
        let mut r = vec![i.to_string()];
        match f {
            Ok(f) => {
                r.extend(f.normal_basis.iter().map(|x| fmt_real(*x)));
                r.push(String::new());
            }
            Err(e) => {
                r.extend(std::iter::repeat_n(String::new(), codim * dim));
                r.push(error_cell(e));
            }
        }
        r
    });
    write_rows(&a.out, &header, rows)?;
    let failed = frames.iter().filter(|f| f.is_err()).count();
    eprintln!("{} normals, {failed} failed", frames.len());
    if let (Some(t), 1) = (&truth.normals, codim) {
        let r = normal_report(&frames, t)?;
        eprintln!(
            "against labels: mean cosine {:.4}, mean |cosine| {:.4}, flipped {:.3}",
            r.mean_cosine, r.mean_abs_cosine, r.flip_fraction
        );
    }
    Ok(())
}

fn vcm(a: &VcmArgs) -> Result<()> {
    let cloud = load(&a.input)?.0;
    let index = build_index(&cloud);
    let variant = if a.printed_variant {
        McvcmVariant::Printed
    } else {
        McvcmVariant::Corrected
    };
    let samples = a.vcm.samples(cloud.len())?;
    let mut field = mcvcm_with(&index, a.vcm.r, samples, a.vcm.seed, variant)?;
    if let Some(conv) = &a.conv {
        field = convolve_vcm(&field, &index, conv)?;
    }
    save_tensor_field(&field, &a.out)?;
    eprintln!("{} tensors from {samples} samples", field.len());
    Ok(())
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let (cloud, truth) = load(&a.input)?;
    let m = intrinsic(a.m, &cloud);
    let index = build_index(&cloud);
    let mask = match (a.eps, a.bandwidth) {
        (Some(e), _) => NeighborhoodSpec::eps_ball(e)?,
        (_, Some(h)) => NeighborhoodSpec::gaussian(h)?,
        _ => NeighborhoodSpec::knn(a.mask_k)?,
    };
    let field = match a.method {
        ShapeMethod::Wme => wme_pca(&index, &NeighborhoodSpec::knn(a.normal_k)?, &mask, m, a.ridge)?,
        ShapeMethod::Vwme => vwme(
            &index,
            &VwmeParams {
                offset_radius: a.r,
                vcm_samples: match a.vcm_samples {
                    Some(s) => s,
                    None => sample_schedule(cloud.len(), 0.05, a.schedule_constant)?,
                },
                seed: a.seed,
                conv: NeighborhoodSpec::knn(a.conv_k)?,
                mask,
                m,
                ridge: a.ridge,
            },
        )?,
    };
    let curv = curvatures(&field);
    let dim = cloud.dim();
    let mut header: Vec<String> = ["index", "H", "K"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=m).map(|j| format!("kappa{j}")));
    header.extend((0..dim).map(|k| format!("n{k}")));
    header.extend(["ridge_fallback", "neighbor_count", "error"].iter().map(|s| s.to_string()));
    let width = header.len();
    let rows = (0..cloud.len()).map(|i| {
        let mut r = vec![i.to_string()];
        match (&curv[i], &field.estimates[i], &field.frames[i]) {
            (Ok(c), Ok(e), Ok(f)) => {
                r.push(fmt_real(c.mean));
                r.push(fmt_real(c.gaussian));
                r.extend(c.principal.iter().map(|x| fmt_real(*x)));
                match f.normal() {
                    Ok(n) => r.extend(n.iter().map(|x| fmt_real(*x))),
                    Err(_) => r.extend(std::iter::repeat_n(String::new(), dim)),
                }
                r.push(u8::from(e.ridge_fallback).to_string());
                r.push(e.neighbor_count.to_string());
                r.push(String::new());
            }
            (Err(err), _, _) => {
                r.resize(width - 1, String::new());
                r.push(error_cell(err));
            }
            _ => unreachable!("curvature succeeds only with an estimate and a frame"),
        }
        r
    });
    write_rows(&a.out, &header, rows)?;
    eprintln!(
        "{} points, {} failed, {} ridge fallbacks",
        cloud.len(),
        field.failures(),
        field.ridge_fallbacks()
    );
    if let Some(h) = &truth.mean_curvature {
        let r = curvature_mse(&curv, h, CurvatureKind::Mean, MseMode::Absolute)?;
        eprintln!("against labels: |H| MSE {:.4e} over {} points", r.mse, r.evaluated);
    }
    Ok(())
}

fn sweep(a: &SweepArgs, threads: Option<usize>) -> Result<bool> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let mut stderr = std::io::stderr();
    harness::sweep::describe(&cfg, &mut stderr)?;
    if a.dry_run {
        return Ok(true);
    }
    let out = a
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&cfg.name));
    let s = harness::run_sweep(&cfg, &out, threads)?;
    eprintln!(
        "{} rows written to {} ({} with fatal errors, {} with point failures)",
        s.rows,
        s.results.display(),
        s.fatal_errors,
        s.partial_failures
    );
    Ok(s.fatal_errors == 0)
}

fn plot(a: &PlotArgs) -> Result<()> {
    let spec = PlotSpec {
        kind: a.kind,
        x: a.x.clone(),
        y: a.y.clone(),
        value: a.value.clone(),
        group: a.group.clone(),
        filters: a.filters.clone(),
        bins: a.bins,
        log_x: a.log_x,
        log_y: a.log_y,
        title: a.title.clone(),
    };
    harness::plot(&a.results, &spec, &a.out)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Noise(a) => noise(a).map(|_| true),
        Command::Normals(a) => normals(a).map(|_| true),
        Command::Vcm(a) => vcm(a).map(|_| true),
        Command::Estimate(a) => estimate(a).map(|_| true),
        Command::Sweep(a) => sweep(a, cli.threads),
        Command::Plot(a) => plot(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
