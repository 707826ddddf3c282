//! Voronoi covariance measure of a point cloud: Monte-Carlo estimator,
//! grid-quadrature reference, and local convolution.
//!
//! Both estimators integrate over the R-offset of the cloud with the density
//! the sampler induces: a point `y` carries weight
//! `w(y) = Σ_{x : |y − x| < R} 1/k(x)`, where `k(x)` counts cloud points in
//! `B(x, R)`. The tensor of cloud point `p` is
//! `∫_{Vor(p)} w(y) (y − p)⊗(y − p) dy / ∫ w`, so the two estimators are
//! directly comparable. Alongside each tensor the field keeps the matching
//! first moment `∫_{Vor(p)} w(y) (y − p) dy / ∫ w`, which tells on which side
//! of the sample the offset mass lies.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::neighborhood::{build_index, NeighborhoodSpec, SpatialIndex};
use crate::pointcloud::{fmt_real, PointCloud};
use crate::random::{self, STREAM_MC_BASE};

/// Number of independent random streams a Monte-Carlo run is split into.
/// Fixed so that results do not depend on the worker count.
pub const MC_SHARDS: usize = 16;

/// Largest ambient dimension accepted by [`brute_vcm`].
pub const BRUTE_MAX_DIM: usize = 3;

/// Upper bound on grid cells visited by [`brute_vcm`].
pub const BRUTE_MAX_CELLS: usize = 200_000_000;

const GRID_BLOCKS: usize = 64;

/// Per-point VCM tensors with their normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub tensors: Vec<SymMatrix>,
    /// First moments, one N-vector per point.
    pub moments: Vec<Vec<f64>>,
    /// Fraction of the total mass attributed to each point.
    pub mass: Vec<f64>,
    /// Normalizer the raw sums were divided by.
    pub total_mass: f64,
    pub offset_radius: f64,
    /// Monte-Carlo sample count, or grid cells for the quadrature oracle.
    pub sample_count: usize,
}

impl TensorField {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tensors.first().map_or(0, SymMatrix::dim)
    }

    fn zeros(n: usize, dim: usize, offset_radius: f64) -> Self {
        Self {
            tensors: vec![SymMatrix::zeros(dim); n],
            moments: vec![vec![0.0; dim]; n],
            mass: vec![0.0; n],
            total_mass: 0.0,
            offset_radius,
            sample_count: 0,
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (t, o) in self.tensors.iter_mut().zip(&other.tensors) {
            t.add_scaled(o, 1.0);
        }
        for (m, o) in self.moments.iter_mut().zip(&other.moments) {
            m.iter_mut().zip(o).for_each(|(a, b)| *a += b);
        }
        for (m, o) in self.mass.iter_mut().zip(&other.mass) {
            *m += o;
        }
        self.total_mass += other.total;
    }

    fn normalize(&mut self) {
        let inv = 1.0 / self.total_mass;
        for t in &mut self.tensors {
            t.scale(inv);
        }
        for m in &mut self.moments {
            m.iter_mut().for_each(|x| *x *= inv);
        }
        self.mass.iter_mut().for_each(|x| *x *= inv);
    }
}

/// Per-worker raw sums.
struct Accumulator {
    tensors: Vec<SymMatrix>,
    moments: Vec<Vec<f64>>,
    mass: Vec<f64>,
    total: f64,
}

impl Accumulator {
    fn new(n: usize, dim: usize) -> Self {
        Self {
            tensors: vec![SymMatrix::zeros(dim); n],
            moments: vec![vec![0.0; dim]; n],
            mass: vec![0.0; n],
            total: 0.0,
        }
    }

    #[inline]
    fn add(&mut self, p: usize, offset: &[f64], weight: f64) {
        self.tensors[p].add_outer(offset, weight);
        self.moments[p].iter_mut().zip(offset).for_each(|(m, d)| *m += weight * d);
        self.mass[p] += weight;
    }
}

/// Which point the Monte-Carlo loop projects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum McvcmVariant {
    /// Project the ball sample `s` onto the cloud and accumulate `s − p`.
    #[default]
    Corrected,
    /// Literal transcription that projects the ball center `x` instead of
    /// `s`. Since `x` is a cloud point it projects to itself and every
    /// tensor is zero; kept for comparison only.
    Printed,
}

/// `⌈C · n · ln(1/ε) / ε²⌉` samples for an ε-accurate Monte-Carlo VCM.
pub fn sample_schedule(n_points: usize, eps: f64, constant: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) || !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "schedule needs 0 < eps < 1 and constant > 0, got eps={eps}, constant={constant}"
        )));
    }
    Ok((constant * n_points as f64 * (1.0 / eps).ln() / (eps * eps)).ceil() as usize)
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("offset radius must be > 0, got {r}")))
    }
}

/// `k(x)`: number of cloud points in `B(x, R)`, the point itself included.
fn ball_counts(index: &SpatialIndex, r: f64) -> Vec<usize> {
    (0..index.len())
        .into_par_iter()
        .map(|i| index.count_within(index.point(i), r))
        .collect()
}

/// Monte-Carlo VCM of `cloud` with offset radius `r`.
pub fn mcvcm(cloud: &PointCloud, r: f64, num_samples: usize, seed: u64) -> Result<TensorField> {
    mcvcm_with(&build_index(cloud), r, num_samples, seed, McvcmVariant::Corrected)
}

/// [`mcvcm`] on a prebuilt index.
///
/// Samples are split over [`MC_SHARDS`] streams; shard sums are merged in
/// shard order, so the output is bit-identical for any thread count.
pub fn mcvcm_with(
    index: &SpatialIndex,
    r: f64,
    num_samples: usize,
    seed: u64,
    variant: McvcmVariant,
) -> Result<TensorField> {
    check_radius(r)?;
    if num_samples == 0 {
        return Err(Error::InvalidParams("num_samples must be >= 1".into()));
    }
    let n = index.len();
    let dim = index.dim();
    let counts = ball_counts(index, r);

    let run_shard = |shard: usize| {
        let quota = num_samples / MC_SHARDS + usize::from(shard < num_samples % MC_SHARDS);
        let mut rng = random::stream(seed, STREAM_MC_BASE + shard as u64);
        let mut acc = Accumulator::new(n, dim);
        let mut s = vec![0.0; dim];
        let mut offset = vec![0.0; dim];
        for _ in 0..quota {
            let x = rng.random_range(0..n);
            let center = index.point(x);
            random::unit_ball(&mut rng, &mut s);
            for (sk, ck) in s.iter_mut().zip(center) {
                *sk = ck + r * *sk;
            }
            let inv_k = 1.0 / counts[x] as f64;
            let probe: &[f64] = match variant {
                McvcmVariant::Corrected => &s,
                McvcmVariant::Printed => center,
            };
            let (p, _) = index.nearest_from(probe, x);
            for ((o, a), b) in offset.iter_mut().zip(probe).zip(index.point(p)) {
                *o = a - b;
            }
            acc.add(p, &offset, inv_k);
            acc.total += inv_k;
        }
        acc
    };

    let mut field = TensorField::zeros(n, dim, r);
    field.sample_count = num_samples;
    // Bounded batches keep at most one accumulator per worker alive.
    let batch = rayon::current_num_threads().clamp(1, MC_SHARDS);
    let shards: Vec<usize> = (0..MC_SHARDS).collect();
    for chunk in shards.chunks(batch) {
        let parts: Vec<Accumulator> = chunk.par_iter().map(|&s| run_shard(s)).collect();
        for part in &parts {
            field.merge(part);
        }
    }
    field.normalize();
    Ok(field)
}

/// Reference VCM by midpoint quadrature on a grid of spacing `step` over the
/// bounding box inflated by `r`. Only for N ≤ 3.
pub fn brute_vcm(cloud: &PointCloud, r: f64, step: f64) -> Result<TensorField> {
    check_radius(r)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParams(format!("grid step must be > 0, got {step}")));
    }
    let dim = cloud.dim();
    if dim > BRUTE_MAX_DIM {
        return Err(Error::InvalidParams(format!(
            "quadrature oracle supports N <= {BRUTE_MAX_DIM}, got {dim}"
        )));
    }
    let index = build_index(cloud);
    let counts = ball_counts(&index, r);
    let n = cloud.len();

    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in cloud.points() {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k] - r);
            hi[k] = hi[k].max(p[k] + r);
        }
    }
    let cells: Vec<usize> = (0..dim).map(|k| ((hi[k] - lo[k]) / step).ceil() as usize).collect();
    let total_cells = cells.iter().try_fold(1usize, |a, &c| a.checked_mul(c));
    let total_cells = match total_cells {
        Some(t) if t <= BRUTE_MAX_CELLS => t,
        _ => {
            return Err(Error::InvalidParams(format!(
                "grid of {cells:?} cells is too fine for the quadrature oracle"
            )))
        }
    };
    let volume = step.powi(dim as i32);

    let run_block = |b: usize| {
        let start = total_cells * b / GRID_BLOCKS;
        let end = total_cells * (b + 1) / GRID_BLOCKS;
        let mut acc = Accumulator::new(n, dim);
        let mut y = vec![0.0; dim];
        let mut offset = vec![0.0; dim];
        for cell in start..end {
            let mut rest = cell;
            for k in 0..dim {
                y[k] = lo[k] + (rest % cells[k]) as f64 * step + 0.5 * step;
                rest /= cells[k];
            }
            let mut w = 0.0;
            index.for_each_within(&y, r, |x, _| w += 1.0 / counts[x] as f64);
            if w == 0.0 {
                continue;
            }
            let (p, _) = index.nearest(&y);
            for ((o, a), b) in offset.iter_mut().zip(&y).zip(index.point(p)) {
                *o = a - b;
            }
            acc.add(p, &offset, w * volume);
            acc.total += w * volume;
        }
        acc
    };

    let mut field = TensorField::zeros(n, dim, r);
    field.sample_count = total_cells;
    let parts: Vec<Accumulator> = (0..GRID_BLOCKS).into_par_iter().map(run_block).collect();
    for part in &parts {
        field.merge(part);
    }
    if field.total_mass == 0.0 {
        return Err(Error::InvalidParams(format!(
            "grid step {step} is too coarse to resolve radius {r}"
        )));
    }
    field.normalize();
    Ok(field)
}

/// Sums each point's tensor with its neighbors' tensors weighted by `spec`;
/// the point itself always enters with weight 1. A point whose neighborhood
/// is empty keeps its own tensor.
pub fn convolve_vcm(field: &TensorField, index: &SpatialIndex, spec: &NeighborhoodSpec) -> Result<TensorField> {
    if field.len() != index.len() {
        return Err(Error::LengthMismatch {
            left: field.len(),
            right: index.len(),
        });
    }
    spec.validate()?;
    let dim = field.dim();
    let rows: Vec<(SymMatrix, Vec<f64>, f64)> = (0..field.len())
        .into_par_iter()
        .map(|i| {
            let mut t = field.tensors[i].clone();
            let mut m = field.moments[i].clone();
            let mut mass = field.mass[i];
            let nb = match index.neighbors(i, spec) {
                Ok(nb) => nb,
                Err(Error::SingletonPoint(_)) => return Ok((t, m, mass)),
                Err(e) => return Err(e),
            };
            for (&j, &w) in nb.indices.iter().zip(&nb.weights) {
                t.add_scaled(&field.tensors[j], w);
                m.iter_mut().zip(&field.moments[j]).for_each(|(a, b)| *a += w * b);
                mass += w * field.mass[j];
            }
            Ok((t, m, mass))
        })
        .collect::<Result<_>>()?;
    let mut out = TensorField::zeros(0, dim, field.offset_radius);
    out.total_mass = field.total_mass;
    out.sample_count = field.sample_count;
    for (t, m, mass) in rows {
        out.tensors.push(t);
        out.moments.push(m);
        out.mass.push(mass);
    }
    Ok(out)
}

/// Writes `index,v00,v01,...` with the upper triangle of each tensor, row by
/// row.
pub fn save_tensor_field(field: &TensorField, path: impl AsRef<Path>) -> Result<()> {
    let dim = field.dim();
    let mut out = BufWriter::new(fs::File::create(path)?);
    let mut cols = vec!["index".to_string()];
    for a in 0..dim {
        for b in a..dim {
            cols.push(format!("v{a}{b}"));
        }
    }
    writeln!(out, "{}", cols.join(","))?;
    for (i, t) in field.tensors.iter().enumerate() {
        let row: Vec<String> = t.upper().iter().map(|x| fmt_real(*x)).collect();
        writeln!(out, "{i},{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}
