//! Additive per-coordinate noise.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::random::{self, STREAM_NOISE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Independent N(0, σ²) increment on every coordinate.
    Gaussian { sigma: f64 },
    /// Independent U(−α, α) increment on every coordinate.
    Uniform { alpha: f64 },
}

impl NoiseKind {
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseKind::Gaussian { sigma } => sigma,
            NoiseKind::Uniform { alpha } => alpha,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Gaussian { .. } => "gaussian",
            NoiseKind::Uniform { .. } => "uniform",
        }
    }

    /// Same kind with a different scale.
    pub fn with_scale(&self, scale: f64) -> Self {
        match self {
            NoiseKind::Gaussian { .. } => NoiseKind::Gaussian { sigma: scale },
            NoiseKind::Uniform { .. } => NoiseKind::Uniform { alpha: scale },
        }
    }

    pub fn parse(kind: &str, scale: f64) -> Result<Self> {
        match kind {
            "gaussian" => Ok(NoiseKind::Gaussian { sigma: scale }),
            "uniform" => Ok(NoiseKind::Uniform { alpha: scale }),
            other => Err(Error::InvalidParams(format!("unknown noise kind {other:?}"))),
        }
    }
}

/// Returns a perturbed copy of `cloud`. Deterministic in `seed`.
pub fn add_noise(cloud: &PointCloud, kind: NoiseKind, seed: u64) -> Result<PointCloud> {
    let scale = kind.scale();
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::NegativeScale(scale));
    }
    if scale == 0.0 {
        return Ok(cloud.clone());
    }
    let mut rng = random::stream(seed, STREAM_NOISE);
    let mut coords = cloud.coords().to_vec();
    match kind {
        NoiseKind::Gaussian { sigma } => {
            for x in coords.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x += sigma * z;
            }
        }
        NoiseKind::Uniform { alpha } => {
            for x in coords.iter_mut() {
                let u: f64 = rng.random();
                *x += alpha * (2.0 * u - 1.0);
            }
        }
    }
    PointCloud::new(cloud.dim(), coords)
}
