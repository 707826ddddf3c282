//! Evaluation metrics: cosine similarity of normals, curvature MSE and
//! distribution summaries.
//!
//! Averages only cover points whose estimate succeeded; the share of failed
//! points is reported next to every average.

use crate::error::{Error, Result};
use crate::normals::TangentFrame;
use crate::weingarten::Curvature;

/// `⟨a, b⟩ / (‖a‖‖b‖)`, clamped to [−1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn abs_cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    cosine_similarity(a, b).map(f64::abs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseMode {
    Signed,
    /// Compares `|Ĥ|` with `|H|`, which ignores normal orientation.
    Absolute,
}

/// Which curvature an MSE refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureKind {
    Mean,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseReport {
    /// NaN when no point was evaluated.
    pub mse: f64,
    pub evaluated: usize,
    pub failed: usize,
}

impl MseReport {
    pub fn failure_rate(&self) -> f64 {
        let total = self.evaluated + self.failed;
        if total == 0 {
            0.0
        } else {
            self.failed as f64 / total as f64
        }
    }
}

/// Mean squared error over the points where `estimated` is `Some`.
pub fn mse(estimated: &[Option<f64>], truth: &[f64], mode: MseMode) -> Result<MseReport> {
    if estimated.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: estimated.len(),
            right: truth.len(),
        });
    }
    let mut sum = 0.0;
    let mut evaluated = 0;
    for (e, t) in estimated.iter().zip(truth) {
        if let Some(e) = e {
            let d = match mode {
                MseMode::Signed => e - t,
                MseMode::Absolute => e.abs() - t.abs(),
            };
            sum += d * d;
            evaluated += 1;
        }
    }
    Ok(MseReport {
        mse: if evaluated > 0 { sum / evaluated as f64 } else { f64::NAN },
        evaluated,
        failed: estimated.len() - evaluated,
    })
}

/// MSE of estimated mean or Gaussian curvature against analytic values.
pub fn curvature_mse(
    estimated: &[Result<Curvature>],
    truth: &[f64],
    kind: CurvatureKind,
    mode: MseMode,
) -> Result<MseReport> {
    let values: Vec<Option<f64>> = estimated
        .iter()
        .map(|c| {
            c.as_ref().ok().map(|c| match kind {
                CurvatureKind::Mean => c.mean,
                CurvatureKind::Gaussian => c.gaussian,
            })
        })
        .collect();
    mse(&values, truth, mode)
}

/// Fraction of evaluated points where the estimated and true mean
/// curvatures have the same strict sign. Points with a zero on either side
/// count as disagreeing.
pub fn sign_agreement(estimated: &[Result<Curvature>], truth: &[f64]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: estimated.len(),
            right: truth.len(),
        });
    }
    let mut agree = 0usize;
    let mut total = 0usize;
    for (e, t) in estimated.iter().zip(truth) {
        if let Ok(c) = e {
            total += 1;
            if c.mean * t > 0.0 {
                agree += 1;
            }
        }
    }
    Ok(if total > 0 { agree as f64 / total as f64 } else { f64::NAN })
}

/// Agreement of estimated normals with reference normals.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalReport {
    /// Signed cosine per point; `None` where the frame failed.
    pub cosines: Vec<Option<f64>>,
    pub mean_cosine: f64,
    pub mean_abs_cosine: f64,
    /// Share of evaluated points with signed cosine < 0.
    pub flip_fraction: f64,
    pub evaluated: usize,
    pub failed: usize,
}

pub fn normal_report(frames: &[Result<TangentFrame>], truth: &[Vec<f64>]) -> Result<NormalReport> {
    if frames.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: frames.len(),
            right: truth.len(),
        });
    }
    let cosines = frames
        .iter()
        .zip(truth)
        .map(|(f, t)| match f {
            Ok(f) => cosine_similarity(&f.normal()?, t).map(Some),
            Err(_) => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let ok: Vec<f64> = cosines.iter().flatten().copied().collect();
    let n = ok.len() as f64;
    let avg = |f: &dyn Fn(f64) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|&c| f(c)).sum::<f64>() / n
        }
    };
    Ok(NormalReport {
        mean_cosine: avg(&|c| c),
        mean_abs_cosine: avg(&f64::abs),
        flip_fraction: avg(&|c| f64::from(u8::from(c < 0.0))),
        evaluated: ok.len(),
        failed: cosines.len() - ok.len(),
        cosines,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub counts: Vec<usize>,
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
}

/// Mean, median, standard deviation and an equal-width histogram over
/// `[min, max]` (the last bin is closed). Constant data lands in a single
/// bin.
pub fn summarize(values: &[f64], bins: usize) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if bins == 0 {
        return Err(Error::InvalidParams("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("cannot summarize non-finite values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stddev = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);

    let (counts, edges) = if max == min {
        (vec![values.len()], vec![min, max])
    } else {
        let width = (max - min) / bins as f64;
        let mut counts = vec![0; bins];
        for v in values {
            let b = (((v - min) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let edges = (0..=bins).map(|b| if b == bins { max } else { min + b as f64 * width }).collect();
        (counts, edges)
    };
    Ok(Summary {
        mean,
        median,
        stddev,
        min,
        max,
        counts,
        edges,
    })
}

/// Median of a nonempty list, ignoring NaN entries.
pub fn median(values: &[f64]) -> Result<f64> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    summarize(&finite, 1).map(|s| s.median)
}
