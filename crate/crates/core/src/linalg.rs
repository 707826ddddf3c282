//! Small dense kernels: a cyclic Jacobi eigensolver for symmetric matrices
//! and the regularized least-squares solve behind the Weingarten estimators.
//!
//! Everything here works on matrices of dimension at most [`MAX_DIM`], so the
//! algorithms favor robustness over asymptotic speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest ambient dimension supported by the crate.
pub const MAX_DIM: usize = 10;

/// Condition number above which [`weingarten_lls`] switches to the ridge solve.
pub const MAX_CONDITION: f64 = 1e12;

const MAX_SWEEPS: usize = 64;

/// A real symmetric matrix. Symmetry is exact: every write mirrors the entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    /// Builds a symmetric matrix from `m`, replacing each off-diagonal pair by
    /// its average.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut m = m;
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(Self { m })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            m: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    /// Builds a matrix from its upper triangle stored row by row
    /// (`dim * (dim + 1) / 2` entries).
    pub fn from_upper(dim: usize, upper: &[f64]) -> Result<Self> {
        let expected = dim * (dim + 1) / 2;
        if upper.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: upper.len(),
            });
        }
        let mut m = DMatrix::zeros(dim, dim);
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        Ok(Self { m })
    }

    /// Upper triangle, row by row. Inverse of [`SymMatrix::from_upper`].
    pub fn upper(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// `self += weight * v ⊗ v`
    pub fn add_outer(&mut self, v: &[f64], weight: f64) {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        for i in 0..n {
            let wi = weight * v[i];
            for j in i..n {
                let x = self.m[(i, j)] + wi * v[j];
                self.m[(i, j)] = x;
                self.m[(j, i)] = x;
            }
        }
    }

    /// `self += weight * other`
    pub fn add_scaled(&mut self, other: &SymMatrix, weight: f64) {
        self.m += &other.m * weight;
    }

    pub fn scale(&mut self, s: f64) {
        self.m *= s;
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|x| x.is_finite())
    }
}

/// Eigen-decomposition of a symmetric matrix.
///
/// `values` are ascending and `vectors.column(j)` is the unit eigenvector for
/// `values[j]`. Each eigenvector is signed so that its largest-magnitude
/// component is nonnegative.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPair {
    /// `Σ λ_j v_j ⊗ v_j`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.values);
        &self.vectors * d * self.vectors.transpose()
    }
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
pub fn sym_eigen(m: &SymMatrix) -> Result<EigenPair> {
    let n = m.dim();
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let mut a = m.as_matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();

    if n > 1 && scale > 0.0 {
        for sweep in 0..MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    // After a few sweeps an element that no longer changes
                    // either diagonal entry is dropped outright.
                    let g = 100.0 * apq.abs();
                    let (app, aqq) = (a[(p, p)].abs(), a[(q, q)].abs());
                    if sweep > 3 && app + g == app && aqq + g == aqq {
                        a[(p, q)] = 0.0;
                        a[(q, p)] = 0.0;
                        continue;
                    }
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));

    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).clone_owned();
        canonicalize_sign(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    Ok(EigenPair { values, vectors })
}

/// Applies the Jacobi rotation that annihilates `a[(p, q)]`.
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.nrows();
    let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = if tau.abs() > 1e150 {
        0.5 / tau
    } else {
        tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        a[(k, p)] = a[(p, k)];
        a[(k, q)] = a[(q, k)];
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Flips `v` so that its largest-magnitude component (first one on ties) is
/// nonnegative.
pub fn canonicalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Output of [`weingarten_lls`].
#[derive(Debug, Clone)]
pub struct LlsSolution {
    /// The m×m solution `S`.
    pub operator: DMatrix<f64>,
    /// Ridge value used when the normal matrix was singular or
    /// ill-conditioned; `None` for the plain solve.
    pub ridge: Option<f64>,
    /// Condition number of `Δ W Δᵀ` (infinite when singular).
    pub condition: f64,
}

impl LlsSolution {
    pub fn used_fallback(&self) -> bool {
        self.ridge.is_some()
    }
}

/// Weighted least-squares solve `S = −Ξ W Δᵀ (Δ W Δᵀ)⁻¹`.
///
/// `xi` and `delta` are m×n (one column per neighbor), `weights` holds the
/// diagonal of `W`. When `Δ W Δᵀ` is singular or its condition number exceeds
/// [`MAX_CONDITION`], the solve uses `(Δ W Δᵀ + ridge·I)⁻¹` instead and
/// reports the ridge. `ridge = None` selects `1e-10 · tr(Δ W Δᵀ) / m`.
pub fn weingarten_lls(
    xi: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    weights: &[f64],
    ridge: Option<f64>,
) -> Result<LlsSolution> {
    let (m, n) = delta.shape();
    if xi.shape() != (m, n) {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            found: xi.nrows() * xi.ncols(),
        });
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if let Some(r) = ridge {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParams(format!("ridge must be >= 0, got {r}")));
        }
    }
    if weights.iter().sum::<f64>() == 0.0 {
        return Err(Error::AllWeightsZero);
    }

    let mut dw = delta.clone();
    for (j, w) in weights.iter().enumerate() {
        dw.column_mut(j).scale_mut(*w);
    }
    let gram = SymMatrix::new(&dw * delta.transpose())?;
    let rhs = xi * dw.transpose();

    let eig = sym_eigen(&gram)?;
    let lo = eig.values[0];
    let hi = eig.values[m - 1];
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };

    let (shift, used) = if condition <= MAX_CONDITION {
        (0.0, None)
    } else {
        let default = 1e-10 * gram.trace() / m as f64;
        let r = match ridge {
            Some(r) if r > 0.0 => r,
            _ => default.max(f64::MIN_POSITIVE),
        };
        (r, Some(r))
    };

    let inv_diag = DVector::from_iterator(m, eig.values.iter().map(|l| 1.0 / (l.max(0.0) + shift)));
    let inverse = &eig.vectors * DMatrix::from_diagonal(&inv_diag) * eig.vectors.transpose();
    let operator = -(rhs * inverse);

    Ok(LlsSolution {
        operator,
        ridge: used,
        condition,
    })
}

/// `(a + aᵀ) / 2`
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
