//! Synthetic test surfaces with analytic normals and curvatures.
//!
//! Curvatures follow the convention in which the outward-oriented sphere of
//! radius ρ has principal curvatures `1/ρ`.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::MAX_DIM;
use crate::pointcloud::{GroundTruth, PointCloud};
use crate::random::{self, STREAM_SURFACE};

/// Torus of revolution around the z axis, optionally restricted to a
/// rectangle of parameter space.
///
/// `theta` runs around the tube, `phi` around the z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusParams {
    pub major_radius: f64,
    pub minor_radius: f64,
    pub theta_range: (f64, f64),
    pub phi_range: (f64, f64),
    /// Sample uniformly with respect to surface area instead of parameter
    /// space (rejection on theta).
    pub area_uniform: bool,
}

impl TorusParams {
    pub fn full(major_radius: f64, minor_radius: f64) -> Self {
        Self {
            major_radius,
            minor_radius,
            theta_range: (0.0, TAU),
            phi_range: (0.0, TAU),
            area_uniform: false,
        }
    }

    /// Three quarters of the torus: φ ∈ [0, 3π/2], leaving two boundary
    /// circles.
    pub fn sectional(major_radius: f64, minor_radius: f64) -> Self {
        Self {
            phi_range: (0.0, 1.5 * PI),
            ..Self::full(major_radius, minor_radius)
        }
    }

    pub fn is_full(&self) -> bool {
        let full = |(a, b): (f64, f64)| a == 0.0 && b == TAU;
        full(self.theta_range) && full(self.phi_range)
    }

    pub fn validate(&self) -> Result<()> {
        let (big, small) = (self.major_radius, self.minor_radius);
        if !(small > 0.0 && big.is_finite() && small < big) {
            return Err(Error::InvalidParams(format!(
                "need 0 < minor radius < major radius, got {small} and {big}"
            )));
        }
        for (name, (a, b)) in [("theta", self.theta_range), ("phi", self.phi_range)] {
            if !(a >= 0.0 && a < b && b <= TAU + 1e-12) {
                return Err(Error::InvalidParams(format!(
                    "{name} range [{a}, {b}] must be a nonempty subset of [0, 2pi]"
                )));
            }
        }
        Ok(())
    }

    pub fn point(&self, theta: f64, phi: f64) -> [f64; 3] {
        let ring = self.major_radius + self.minor_radius * theta.cos();
        [
            ring * phi.cos(),
            ring * phi.sin(),
            self.minor_radius * theta.sin(),
        ]
    }

    /// Outward unit normal.
    pub fn normal(&self, theta: f64, phi: f64) -> [f64; 3] {
        [theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin()]
    }

    /// Principal curvatures `(κ_θ, κ_φ)` along the tube and ring directions.
    pub fn principal_curvatures(&self, theta: f64) -> (f64, f64) {
        let (big, small) = (self.major_radius, self.minor_radius);
        (1.0 / small, theta.cos() / (big + small * theta.cos()))
    }

    pub fn mean_curvature(&self, theta: f64) -> f64 {
        let (big, small) = (self.major_radius, self.minor_radius);
        let c = theta.cos();
        (big + 2.0 * small * c) / (2.0 * small * (big + small * c))
    }

    pub fn gaussian_curvature(&self, theta: f64) -> f64 {
        let (big, small) = (self.major_radius, self.minor_radius);
        let c = theta.cos();
        c / (small * (big + small * c))
    }
}

/// Draws `n` torus points with analytic labels. Deterministic in `seed`.
pub fn sample_torus(n: usize, params: &TorusParams, seed: u64) -> Result<(PointCloud, GroundTruth)> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParams("need at least one point".into()));
    }
    let mut rng = random::stream(seed, STREAM_SURFACE);
    let (t0, t1) = params.theta_range;
    let (p0, p1) = params.phi_range;
    let (big, small) = (params.major_radius, params.minor_radius);

    let mut coords = Vec::with_capacity(3 * n);
    let mut normals = Vec::with_capacity(n);
    let mut mean = Vec::with_capacity(n);
    let mut gauss = Vec::with_capacity(n);
    let mut shape = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = loop {
            let t = t0 + (t1 - t0) * rng.random::<f64>();
            if !params.area_uniform {
                break t;
            }
            let accept = (big + small * t.cos()) / (big + small);
            if rng.random::<f64>() < accept {
                break t;
            }
        };
        let phi = p0 + (p1 - p0) * rng.random::<f64>();
        coords.extend_from_slice(&params.point(theta, phi));
        normals.push(params.normal(theta, phi).to_vec());
        mean.push(params.mean_curvature(theta));
        gauss.push(params.gaussian_curvature(theta));
        let (k_theta, k_phi) = params.principal_curvatures(theta);
        shape.push(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![k_theta, k_phi])));
    }
    let truth = GroundTruth {
        normals: Some(normals),
        mean_curvature: Some(mean),
        gaussian_curvature: Some(gauss),
        shape_operator: Some(shape),
    };
    Ok((PointCloud::new(3, coords)?, truth))
}

/// Draws `n` points uniformly on the sphere of radius `radius` in ℝ^`dim`.
pub fn sample_hypersphere(
    n: usize,
    dim: usize,
    radius: f64,
    seed: u64,
) -> Result<(PointCloud, GroundTruth)> {
    if n == 0 {
        return Err(Error::InvalidParams("need at least one point".into()));
    }
    if !(2..=MAX_DIM).contains(&dim) {
        return Err(Error::InvalidParams(format!(
            "ambient dimension must be in 2..={MAX_DIM}, got {dim}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParams(format!("radius must be > 0, got {radius}")));
    }
    let mut rng = random::stream(seed, STREAM_SURFACE);
    let mut coords = vec![0.0; n * dim];
    let mut normals = Vec::with_capacity(n);
    for p in coords.chunks_exact_mut(dim) {
        random::unit_sphere(&mut rng, p);
        normals.push(p.to_vec());
        p.iter_mut().for_each(|x| *x *= radius);
    }
    let k = 1.0 / radius;
    let truth = GroundTruth {
        normals: Some(normals),
        mean_curvature: Some(vec![k; n]),
        gaussian_curvature: Some(vec![k.powi(dim as i32 - 1); n]),
        shape_operator: Some(vec![DMatrix::identity(dim - 1, dim - 1) * k; n]),
    };
    Ok((PointCloud::new(dim, coords)?, truth))
}
