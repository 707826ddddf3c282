//! Shared fixtures for the benchmarks.

use nalgebra::DMatrix;
use shapeop::{sample_torus, PointCloud, SymMatrix, TorusParams};

/// Deterministic symmetric test matrix with a spread spectrum.
pub fn test_matrix(dim: usize) -> SymMatrix {
    let a = DMatrix::from_fn(dim, dim, |i, j| ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5);
    SymMatrix::new(&a + a.transpose()).expect("symmetric by construction")
}

pub fn torus(n: usize) -> PointCloud {
    sample_torus(n, &TorusParams::full(2.0, 1.0), 0).expect("valid torus").0
}
