//! Tangent and normal frames from local PCA or from a (convolved) Voronoi
//! covariance tensor.
//!
//! The two methods read the eigen-decomposition in opposite orders. Local
//! point spread is largest along the tangent space, so PCA takes the N−m
//! smallest eigenvectors as normals. The VCM collects offset mass along the
//! normal cone, so its N−m largest eigenvectors are the normals.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix};
use crate::neighborhood::{NeighborhoodSpec, SpatialIndex};
use crate::vcm::TensorField;

/// Relative eigenvalue threshold below which a direction counts as collapsed.
const RANK_TOL: f64 = 1e-12;

/// Orthonormal split of ℝᴺ into N−m normal and m tangent directions.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    /// N×(N−m), most normal direction first.
    pub normal_basis: DMatrix<f64>,
    /// N×m, one tangent vector per column.
    pub tangent_basis: DMatrix<f64>,
    /// Eigenvalues of the matrix the frame came from, ascending.
    pub eigenvalues: DVector<f64>,
}

impl TangentFrame {
    /// Frame of a hypersurface with unit normal `normal`. The tangent basis
    /// is the rest of the Householder reflector that maps a coordinate axis
    /// onto the normal line.
    pub fn from_normal(normal: &[f64]) -> Result<Self> {
        let dim = normal.len();
        if dim < 2 {
            return Err(Error::InvalidInput("a frame needs ambient dimension >= 2".into()));
        }
        let norm = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::ZeroVector);
        }
        let n = DVector::from_iterator(dim, normal.iter().map(|x| x / norm));
        let k = n.iamax();
        let mut u = n.clone();
        u[k] += n[k].signum();
        let h = DMatrix::identity(dim, dim) - (&u * u.transpose()) * (2.0 / u.norm_squared());
        let mut tangent = DMatrix::zeros(dim, dim - 1);
        for (col, j) in (0..dim).filter(|&j| j != k).enumerate() {
            tangent.set_column(col, &h.column(j));
        }
        Ok(Self {
            normal_basis: DMatrix::from_column_slice(dim, 1, n.as_slice()),
            tangent_basis: tangent,
            eigenvalues: DVector::zeros(0),
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.tangent_basis.nrows()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.tangent_basis.ncols()
    }

    pub fn codim(&self) -> usize {
        self.normal_basis.ncols()
    }

    /// The unit normal of a codimension-1 frame.
    pub fn normal(&self) -> Result<Vec<f64>> {
        if self.codim() != 1 {
            return Err(Error::CodimensionNotOne(self.codim()));
        }
        Ok(self.normal_basis.column(0).iter().copied().collect())
    }

    /// Flips the normal so that `⟨n, reference⟩ ≥ 0`. A zero inner product
    /// keeps the current sign. Returns whether a flip happened.
    pub fn align_to(&mut self, reference: &[f64]) -> Result<bool> {
        if self.codim() != 1 {
            return Err(Error::CodimensionNotOne(self.codim()));
        }
        if reference.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                found: reference.len(),
            });
        }
        let dot: f64 = self.normal_basis.column(0).iter().zip(reference).map(|(a, b)| a * b).sum();
        if dot < 0.0 {
            self.normal_basis.neg_mut();
            return Ok(true);
        }
        Ok(false)
    }

    /// `[normal_basis | tangent_basis]ᵀ [normal_basis | tangent_basis]`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.ambient_dim(), self.ambient_dim());
        q.columns_mut(0, self.codim()).copy_from(&self.normal_basis);
        q.columns_mut(self.codim(), self.intrinsic_dim()).copy_from(&self.tangent_basis);
        q.transpose() * q
    }
}

fn check_dims(dim: usize, m: usize) -> Result<()> {
    if m == 0 || m >= dim {
        return Err(Error::InvalidParams(format!(
            "intrinsic dimension must be in 1..{dim}, got {m}"
        )));
    }
    Ok(())
}

/// Builds a frame from an eigen-decomposition. `normal_largest` selects the
/// VCM ordering; otherwise the PCA ordering is used.
fn frame_from_eigen(values: DVector<f64>, vectors: DMatrix<f64>, m: usize, normal_largest: bool) -> TangentFrame {
    let dim = values.len();
    let codim = dim - m;
    let mut normal = DMatrix::zeros(dim, codim);
    let mut tangent = DMatrix::zeros(dim, m);
    for c in 0..codim {
        let src = if normal_largest { dim - 1 - c } else { c };
        normal.set_column(c, &vectors.column(src));
    }
    for c in 0..m {
        let src = if normal_largest { c } else { dim - 1 - c };
        tangent.set_column(c, &vectors.column(src));
    }
    TangentFrame {
        normal_basis: normal,
        tangent_basis: tangent,
        eigenvalues: values,
    }
}

/// PCA frame of cloud point `i`.
///
/// The covariance is taken over the neighborhood together with the point
/// itself (weight 1), centered at the weighted mean. Gaussian neighborhoods
/// weight both the mean and the covariance.
pub fn pca_frame(index: &SpatialIndex, i: usize, spec: &NeighborhoodSpec, m: usize) -> Result<TangentFrame> {
    let dim = index.dim();
    check_dims(dim, m)?;
    let nb = index.neighbors(i, spec)?;
    let center = index.point(i);

    // Offsets from the query point keep the sums well scaled for clouds far
    // from the origin.
    let mut offsets = Vec::with_capacity((nb.len() + 1) * dim);
    let mut weights = Vec::with_capacity(nb.len() + 1);
    offsets.extend(std::iter::repeat_n(0.0, dim));
    weights.push(1.0);
    for (&j, &w) in nb.indices.iter().zip(&nb.weights) {
        offsets.extend(index.point(j).iter().zip(center).map(|(a, b)| a - b));
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; dim];
    for (y, w) in offsets.chunks_exact(dim).zip(&weights) {
        for (acc, v) in mean.iter_mut().zip(y) {
            *acc += w * v;
        }
    }
    mean.iter_mut().for_each(|x| *x /= total);

    let mut cov = SymMatrix::zeros(dim);
    let mut d = vec![0.0; dim];
    for (y, w) in offsets.chunks_exact(dim).zip(&weights) {
        for ((dk, yk), mk) in d.iter_mut().zip(y).zip(&mean) {
            *dk = yk - mk;
        }
        cov.add_outer(&d, *w);
    }

    let eig = sym_eigen(&cov)?;
    let top = eig.values[dim - 1];
    let rank = if top > 0.0 {
        eig.values.iter().filter(|&&l| l > RANK_TOL * top).count()
    } else {
        0
    };
    if rank < m {
        return Err(Error::DegenerateNeighborhood {
            index: i,
            rank,
            needed: m,
        });
    }
    Ok(frame_from_eigen(eig.values, eig.vectors, m, false))
}

/// [`pca_frame`] for every point, computed in parallel, in point order.
pub fn pca_frames(index: &SpatialIndex, spec: &NeighborhoodSpec, m: usize) -> Vec<Result<TangentFrame>> {
    (0..index.len())
        .into_par_iter()
        .map(|i| pca_frame(index, i, spec, m))
        .collect()
}

/// Frame from a (convolved) VCM tensor: normals are the eigenvectors of the
/// N−m largest eigenvalues.
pub fn vcm_frame(vcm: &SymMatrix, m: usize) -> Result<TangentFrame> {
    check_dims(vcm.dim(), m)?;
    let eig = sym_eigen(vcm)?;
    Ok(frame_from_eigen(eig.values, eig.vectors, m, true))
}

/// VCM frame oriented by the tensor's first moment: the normal is flipped
/// to point the way most offset mass lies. A zero moment leaves the
/// eigenvector sign convention in place.
pub fn oriented_vcm_frame(vcm: &SymMatrix, moment: &[f64], m: usize) -> Result<TangentFrame> {
    let mut frame = vcm_frame(vcm, m)?;
    if frame.codim() == 1 {
        frame.align_to(moment)?;
    }
    Ok(frame)
}

/// Frames of every point of a (convolved) VCM field. With `orient` set,
/// hypersurface normals follow the field's first moments.
pub fn vcm_frames(field: &TensorField, m: usize, orient: bool) -> Vec<Result<TangentFrame>> {
    field
        .tensors
        .par_iter()
        .zip(&field.moments)
        .map(|(t, mom)| if orient { oriented_vcm_frame(t, mom, m) } else { vcm_frame(t, m) })
        .collect()
}

/// Copies of `frames` with each normal flipped so that `⟨n_i, ref_i⟩ ≥ 0`.
pub fn align_frames(frames: &[TangentFrame], reference: &[Vec<f64>]) -> Result<Vec<TangentFrame>> {
    if frames.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: frames.len(),
            right: reference.len(),
        });
    }
    frames
        .iter()
        .zip(reference)
        .map(|(f, r)| {
            let mut out = f.clone();
            out.align_to(r)?;
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighborhood::build_index;
    use crate::pointcloud::PointCloud;
    use crate::surfaces::sample_hypersphere;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_orthonormal(f: &TangentFrame) {
        let g = f.gram();
        let err = (g - DMatrix::identity(f.ambient_dim(), f.ambient_dim())).abs().max();
        assert!(err < 1e-8, "gram error {err}");
    }

    fn plane(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0])
            .collect();
        PointCloud::from_points(&pts).unwrap()
    }

    fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        a.qr().q()
    }

    #[test]
    fn coplanar_points_give_z_normal() {
        let c = plane(20, 1);
        let idx = build_index(&c);
        let f = pca_frame(&idx, 0, &NeighborhoodSpec::Knn { k: 19 }, 2).unwrap();
        let n = f.normal().unwrap();
        assert!((n[2].abs() - 1.0).abs() < 1e-12);
        assert!(f.tangent_basis.row(2).iter().all(|x| x.abs() < 1e-12));
        assert_orthonormal(&f);
    }

    #[test]
    fn plane_normal_eigenvalue_vanishes() {
        let c = plane(200, 2);
        let idx = build_index(&c);
        for i in 0..c.len() {
            let nb = idx.neighbors(i, &NeighborhoodSpec::Knn { k: 15 }).unwrap();
            let diam = 2.0 * nb.distances.last().unwrap();
            let f = pca_frame(&idx, i, &NeighborhoodSpec::Knn { k: 15 }, 2).unwrap();
            assert!(f.eigenvalues[0].abs() <= 1e-12 * diam * diam);
        }
    }

    #[test]
    fn dense_sphere_normals() {
        let (c, truth) = sample_hypersphere(5000, 3, 1.0, 3).unwrap();
        let idx = build_index(&c);
        let frames = pca_frames(&idx, &NeighborhoodSpec::Knn { k: 50 }, 2);
        let normals = truth.normals.unwrap();
        let mean_abs_cos = frames
            .iter()
            .zip(&normals)
            .map(|(f, t)| {
                let n = f.as_ref().unwrap().normal().unwrap();
                n.iter().zip(t).map(|(a, b)| a * b).sum::<f64>().abs()
            })
            .sum::<f64>()
            / c.len() as f64;
        assert!(mean_abs_cos >= 0.999, "{mean_abs_cos}");
    }

    #[test]
    fn one_neighbor_is_degenerate() {
        let c = PointCloud::from_points(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 5.0, 5.0]]).unwrap();
        let idx = build_index(&c);
        assert!(matches!(
            pca_frame(&idx, 0, &NeighborhoodSpec::Knn { k: 1 }, 2),
            Err(Error::DegenerateNeighborhood { index: 0, rank: 1, needed: 2 })
        ));
        assert!(matches!(
            pca_frame(&idx, 0, &NeighborhoodSpec::EpsBall { eps: 0.5 }, 2),
            Err(Error::SingletonPoint(0))
        ));
    }

    #[test]
    fn vcm_dominant_axis_is_normal() {
        let v = SymMatrix::from_diagonal(&[0.01, 0.02, 5.0]);
        let f = vcm_frame(&v, 2).unwrap();
        assert_eq!(f.normal().unwrap(), vec![0.0, 0.0, 1.0]);
        assert_orthonormal(&f);
    }

    #[test]
    fn vcm_rank_one() {
        let v = [1.0, 2.0, -2.0].map(|x| x / 3.0);
        let mut m = SymMatrix::zeros(3);
        m.add_outer(&v, 4.0);
        let f = vcm_frame(&m, 2).unwrap();
        let n = f.normal().unwrap();
        let dot: f64 = n.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oriented_frame_follows_moment() {
        let v = SymMatrix::from_diagonal(&[0.01, 0.02, 5.0]);
        let f = oriented_vcm_frame(&v, &[0.0, 0.0, -1.0], 2).unwrap();
        assert_eq!(f.normal().unwrap(), vec![0.0, 0.0, -1.0]);
    }

    #[test]
    fn align_rules() {
        let f = TangentFrame::from_normal(&[0.0, 0.0, 1.0]).unwrap();
        let flipped = align_frames(std::slice::from_ref(&f), &[vec![0.0, 0.0, -1.0]]).unwrap();
        assert_eq!(flipped[0].normal().unwrap(), vec![0.0, 0.0, -1.0]);
        let tie = align_frames(std::slice::from_ref(&f), &[vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(tie[0], f);
        let same = align_frames(std::slice::from_ref(&f), &[vec![0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(same[0], f);

        let v = SymMatrix::from_diagonal(&[0.0, 1.0, 2.0, 3.0]);
        let wide = vcm_frame(&v, 2).unwrap();
        assert!(matches!(
            align_frames(&[wide], &[vec![1.0; 4]]),
            Err(Error::CodimensionNotOne(2))
        ));
    }

    #[test]
    fn intrinsic_dimension_is_checked() {
        let v = SymMatrix::identity(3);
        assert!(vcm_frame(&v, 0).is_err());
        assert!(vcm_frame(&v, 3).is_err());
    }

    proptest! {
        #[test]
        fn analytic_frames_are_orthonormal(v in prop::collection::vec(-1.0f64..1.0, 2..10)) {
            prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let f = TangentFrame::from_normal(&v).unwrap();
            let g = f.gram();
            prop_assert!((g - DMatrix::identity(v.len(), v.len())).abs().max() < 1e-12);
        }

        #[test]
        fn pca_frames_rotate_with_the_cloud(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, _) = sample_hypersphere(300, 3, 1.0, seed).unwrap();
            let q = random_rotation(&mut rng, 3);
            let shift = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let rotated = c
                .map_points(3, |p, out| {
                    let v = &q * DVector::from_column_slice(p);
                    for k in 0..3 {
                        out[k] = v[k] + shift[k];
                    }
                })
                .unwrap();
            let a = build_index(&c);
            let b = build_index(&rotated);
            let spec = NeighborhoodSpec::Knn { k: 20 };
            for i in (0..c.len()).step_by(10) {
                let fa = pca_frame(&a, i, &spec, 2).unwrap();
                let fb = pca_frame(&b, i, &spec, 2).unwrap();
                prop_assert!(fa.gram().relative_eq(&DMatrix::identity(3, 3), 1e-8, 1e-8));
                // Subspace distance between projectors.
                let pa = &q * &fa.tangent_basis * fa.tangent_basis.transpose() * q.transpose();
                let pb = &fb.tangent_basis * fb.tangent_basis.transpose();
                prop_assert!((pa - pb).norm() < 1e-6);
            }
        }
    }
}
