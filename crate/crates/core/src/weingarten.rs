//! Weingarten map (shape operator) estimation and curvature extraction.
//!
//! For a hypersurface with unit normal field ζ and tangent basis E at `x_i`,
//! a first-order expansion of the Gauss map gives, for every neighbor `x_j`,
//! `Eᵀ(ζ_j − ζ_i) ≈ −S Eᵀ(x_j − x_i)`. Stacking neighbors as columns of
//! `Ξ` and `Δ` turns this into the weighted least-squares problem solved by
//! [`weingarten_lls`].
//!
//! With S(v) = −∇_v ζ, an outward-oriented sphere of radius ρ yields
//! S = −I/ρ; flipping the normal field flips S. Curvature comparisons
//! against ground truth therefore use absolute values unless the normal
//! orientation is known.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, symmetrize, weingarten_lls, SymMatrix};
use crate::neighborhood::{NeighborhoodSpec, SpatialIndex};
use crate::normals::{pca_frames, vcm_frames, TangentFrame};
use crate::vcm::{convolve_vcm, mcvcm_with, McvcmVariant};

/// Estimated shape operator at one point, in that point's tangent basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEstimate {
    /// Symmetric m×m matrix.
    pub operator: DMatrix<f64>,
    /// The least-squares normal matrix was ill-conditioned and a ridge was
    /// added.
    pub ridge_fallback: bool,
    /// Neighbors that entered the fit.
    pub neighbor_count: usize,
}

/// Per-point shape operators together with the frames they are expressed in.
#[derive(Debug, Clone)]
pub struct ShapeField {
    pub estimates: Vec<Result<ShapeEstimate>>,
    pub frames: Vec<Result<TangentFrame>>,
}

impl ShapeField {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn failures(&self) -> usize {
        self.estimates.iter().filter(|e| e.is_err()).count()
    }

    pub fn ridge_fallbacks(&self) -> usize {
        self.estimates
            .iter()
            .filter(|e| e.as_ref().is_ok_and(|s| s.ridge_fallback))
            .count()
    }
}

/// Shape operator at point `i` given frames for the whole cloud.
///
/// Neighbor normals are flipped into the half-space of `ζ_i` before
/// differencing. Neighbors whose own frame failed are skipped.
pub fn wme_point(
    index: &SpatialIndex,
    frames: &[Result<TangentFrame>],
    i: usize,
    mask: &NeighborhoodSpec,
    ridge: Option<f64>,
) -> Result<ShapeEstimate> {
    let frame = frames[i].as_ref().map_err(Clone::clone)?;
    let zeta_i = frame.normal()?;
    let e = &frame.tangent_basis;
    let m = e.ncols();
    let nb = index.neighbors(i, mask)?;
    let xi_point = index.point(i);

    let mut dx = Vec::with_capacity(nb.len());
    let mut dz = Vec::with_capacity(nb.len());
    let mut weights = Vec::with_capacity(nb.len());
    for (&j, &w) in nb.indices.iter().zip(&nb.weights) {
        let Ok(fj) = &frames[j] else { continue };
        let mut zeta_j = fj.normal()?;
        let dot: f64 = zeta_j.iter().zip(&zeta_i).map(|(a, b)| a * b).sum();
        if dot < 0.0 {
            zeta_j.iter_mut().for_each(|x| *x = -*x);
        }
        dx.push(DVector::from_iterator(
            zeta_i.len(),
            index.point(j).iter().zip(xi_point).map(|(a, b)| a - b),
        ));
        dz.push(DVector::from_iterator(
            zeta_i.len(),
            zeta_j.iter().zip(&zeta_i).map(|(a, b)| a - b),
        ));
        weights.push(w);
    }
    if weights.len() < m {
        return Err(Error::InsufficientNeighbors {
            index: i,
            found: weights.len(),
            needed: m,
        });
    }
    let et = e.transpose();
    let mut delta = DMatrix::zeros(m, weights.len());
    let mut xi = DMatrix::zeros(m, weights.len());
    for (c, (a, b)) in dx.iter().zip(&dz).enumerate() {
        delta.set_column(c, &(&et * a));
        xi.set_column(c, &(&et * b));
    }
    let sol = weingarten_lls(&xi, &delta, &weights, ridge)?;
    Ok(ShapeEstimate {
        operator: symmetrize(&sol.operator),
        ridge_fallback: sol.used_fallback(),
        neighbor_count: weights.len(),
    })
}

/// WME: shape operators for every point from the given frames.
pub fn wme(
    index: &SpatialIndex,
    frames: &[Result<TangentFrame>],
    mask: &NeighborhoodSpec,
    ridge: Option<f64>,
) -> Result<Vec<Result<ShapeEstimate>>> {
    if frames.len() != index.len() {
        return Err(Error::LengthMismatch {
            left: index.len(),
            right: frames.len(),
        });
    }
    mask.validate()?;
    Ok((0..index.len())
        .into_par_iter()
        .map(|i| wme_point(index, frames, i, mask, ridge))
        .collect())
}

/// PCA frames with `normal_spec` followed by [`wme`] with `mask`.
pub fn wme_pca(
    index: &SpatialIndex,
    normal_spec: &NeighborhoodSpec,
    mask: &NeighborhoodSpec,
    m: usize,
    ridge: Option<f64>,
) -> Result<ShapeField> {
    normal_spec.validate()?;
    let frames = pca_frames(index, normal_spec, m);
    let estimates = wme(index, &frames, mask, ridge)?;
    Ok(ShapeField { estimates, frames })
}

/// Parameters of [`vwme`].
#[derive(Debug, Clone, PartialEq)]
pub struct VwmeParams {
    /// VCM offset radius R.
    pub offset_radius: f64,
    pub vcm_samples: usize,
    pub seed: u64,
    /// Convolution neighborhood of the VCM.
    pub conv: NeighborhoodSpec,
    /// Least-squares mask.
    pub mask: NeighborhoodSpec,
    /// Intrinsic dimension.
    pub m: usize,
    pub ridge: Option<f64>,
}

/// VWME: frames from the eigenbasis of the convolved Monte-Carlo VCM,
/// oriented by its first moment, then the WME fit.
pub fn vwme(index: &SpatialIndex, params: &VwmeParams) -> Result<ShapeField> {
    if params.vcm_samples == 0 {
        return Err(Error::InvalidParams("vcm_samples must be >= 1".into()));
    }
    params.conv.validate()?;
    params.mask.validate()?;
    let field = mcvcm_with(
        index,
        params.offset_radius,
        params.vcm_samples,
        params.seed,
        McvcmVariant::Corrected,
    )?;
    let conv = convolve_vcm(&field, index, &params.conv)?;
    let frames = vcm_frames(&conv, params.m, true);
    let estimates = wme(index, &frames, &params.mask, params.ridge)?;
    Ok(ShapeField { estimates, frames })
}

/// Curvatures at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Curvature {
    /// `tr(S) / m`.
    pub mean: f64,
    /// `det(S)`.
    pub gaussian: f64,
    /// Eigenvalues of S, ascending.
    pub principal: Vec<f64>,
    /// Unit principal directions in ℝᴺ, matching `principal`.
    pub directions: Vec<Vec<f64>>,
}

/// Mean, Gaussian and principal curvatures of `operator` expressed in the
/// columns of `tangent_basis`.
pub fn curvature(operator: &DMatrix<f64>, tangent_basis: &DMatrix<f64>) -> Result<Curvature> {
    let m = operator.nrows();
    if operator.ncols() != m || tangent_basis.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: tangent_basis.ncols(),
        });
    }
    let eig = sym_eigen(&SymMatrix::new(operator.clone())?)?;
    let directions = (0..m)
        .map(|c| (tangent_basis * eig.vectors.column(c)).iter().copied().collect())
        .collect();
    Ok(Curvature {
        mean: operator.trace() / m as f64,
        gaussian: operator.determinant(),
        principal: eig.values.iter().copied().collect(),
        directions,
    })
}

/// Curvatures of every successful estimate; failures carry through.
pub fn curvatures(field: &ShapeField) -> Vec<Result<Curvature>> {
    field
        .estimates
        .iter()
        .zip(&field.frames)
        .map(|(est, frame)| {
            let est = est.as_ref().map_err(Clone::clone)?;
            let frame = frame.as_ref().map_err(Clone::clone)?;
            curvature(&est.operator, &frame.tangent_basis)
        })
        .collect()
}
