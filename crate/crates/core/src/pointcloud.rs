//! Point cloud container, ground-truth labels and text I/O.
//!
//! Two text formats are supported:
//!
//! * CSV: one header line `x0,...,x{N-1}[,n0,...,n{N-1}][,H][,K]` followed by
//!   one row per point. Files without a header are read as pure coordinates.
//! * XYZ: whitespace separated `x y z`, no header, ambient dimension 3 only.
//!
//! Reals are written with 17 significant digits so that a save/load cycle
//! reproduces every coordinate bit for bit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::MAX_DIM;

/// `n` points in ℝᴺ stored contiguously, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidInput(format!(
                "ambient dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not form a nonempty set of {dim}-d points",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point {} has a non-finite coordinate",
                pos / dim
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    /// Ambient dimension N.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Applies `f(src, dst)` to every point, producing a cloud of dimension
    /// `out_dim`.
    pub fn map_points(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut coords = vec![0.0; self.len() * out_dim];
        for (src, dst) in self.points().zip(coords.chunks_exact_mut(out_dim)) {
            f(src, dst);
        }
        Self::new(out_dim, coords)
    }

    /// Smallest distance between two distinct points (brute force).
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                best = best.min(dist2(self.point(i), self.point(j)));
            }
        }
        best.sqrt()
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Analytic labels attached to a synthetic cloud.
///
/// The curvature convention is the one where the outward-oriented unit
/// sphere has `H = K = 1`, and `shape_operator[i]` is expressed in the
/// principal tangent basis of point `i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub normals: Option<Vec<Vec<f64>>>,
    pub mean_curvature: Option<Vec<f64>>,
    pub gaussian_curvature: Option<Vec<f64>>,
    pub shape_operator: Option<Vec<DMatrix<f64>>>,
}

impl GroundTruth {
    /// Checks label lengths against a cloud of `n` points in ℝᴺ and that
    /// normals are unit vectors.
    pub fn validate(&self, n: usize, dim: usize) -> Result<()> {
        let check_len = |len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::LengthMismatch { left: n, right: len })
            }
        };
        if let Some(normals) = &self.normals {
            check_len(normals.len())?;
            for (i, v) in normals.iter().enumerate() {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: v.len(),
                    });
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidInput(format!(
                        "normal {i} has length {norm}"
                    )));
                }
            }
        }
        if let Some(h) = &self.mean_curvature {
            check_len(h.len())?;
        }
        if let Some(k) = &self.gaussian_curvature {
            check_len(k.len())?;
        }
        if let Some(s) = &self.shape_operator {
            check_len(s.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Csv,
    Xyz,
}

impl CloudFormat {
    /// Guesses the format from the file extension (`.xyz` or anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("xyz") => CloudFormat::Xyz,
            _ => CloudFormat::Csv,
        }
    }
}

impl std::str::FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CloudFormat::Csv),
            "xyz" => Ok(CloudFormat::Xyz),
            other => Err(Error::InvalidParams(format!("unknown cloud format {other:?}"))),
        }
    }
}

pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    load_labeled(path, format).map(|(cloud, _)| cloud)
}

/// Loads a cloud together with any label columns found in the CSV header.
pub fn load_labeled(
    path: impl AsRef<Path>,
    format: CloudFormat,
) -> Result<(PointCloud, GroundTruth)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;

    for (lineno, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            continue;
        }
        let parsed: Vec<Option<f64>> = tokens.iter().map(|t| t.parse().ok()).collect();
        if rows.is_empty() && header.is_none() && format == CloudFormat::Csv
            && parsed.iter().any(Option::is_none) {
                header = Some(tokens.iter().map(|t| t.to_string()).collect());
                width = Some(tokens.len());
                continue;
            }
        let expected = *width.get_or_insert(tokens.len());
        if tokens.len() != expected {
            return Err(Error::RaggedRows {
                path: path.to_path_buf(),
                row: rows.len(),
                expected,
                found: tokens.len(),
            });
        }
        let mut row = Vec::with_capacity(tokens.len());
        for (tok, val) in tokens.iter().zip(parsed) {
            match val {
                Some(v) => row.push(v),
                None => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        token: tok.to_string(),
                    })
                }
            }
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let width = rows[0].len();

    let layout = match &header {
        Some(cols) => ColumnLayout::from_header(cols)?,
        None => ColumnLayout::coordinates_only(width),
    };
    if format == CloudFormat::Xyz && layout.dim != 3 {
        return Err(Error::InvalidInput(format!(
            "xyz rows must have 3 columns, found {}",
            layout.dim
        )));
    }

    let mut coords = Vec::with_capacity(rows.len() * layout.dim);
    let mut truth = GroundTruth::default();
    let mut normals = layout.normals.map(|_| Vec::with_capacity(rows.len()));
    let mut mean = layout.mean.map(|_| Vec::with_capacity(rows.len()));
    let mut gauss = layout.gauss.map(|_| Vec::with_capacity(rows.len()));
    for row in &rows {
        coords.extend_from_slice(&row[..layout.dim]);
        if let (Some(start), Some(out)) = (layout.normals, normals.as_mut()) {
            out.push(row[start..start + layout.dim].to_vec());
        }
        if let (Some(c), Some(out)) = (layout.mean, mean.as_mut()) {
            out.push(row[c]);
        }
        if let (Some(c), Some(out)) = (layout.gauss, gauss.as_mut()) {
            out.push(row[c]);
        }
    }
    truth.normals = normals;
    truth.mean_curvature = mean;
    truth.gaussian_curvature = gauss;

    Ok((PointCloud::new(layout.dim, coords)?, truth))
}

struct ColumnLayout {
    dim: usize,
    normals: Option<usize>,
    mean: Option<usize>,
    gauss: Option<usize>,
}

impl ColumnLayout {
    fn coordinates_only(width: usize) -> Self {
        Self {
            dim: width,
            normals: None,
            mean: None,
            gauss: None,
        }
    }

    fn from_header(cols: &[String]) -> Result<Self> {
        let dim = cols
            .iter()
            .take_while(|c| c.starts_with('x'))
            .count();
        if dim == 0 {
            return Err(Error::InvalidInput(format!(
                "header must start with x0..x(N-1), got {cols:?}"
            )));
        }
        let find = |name: &str| cols.iter().position(|c| c == name);
        let normals = find("n0");
        if let Some(start) = normals {
            for k in 0..dim {
                if cols.get(start + k).map(String::as_str) != Some(format!("n{k}").as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "normal columns must be n0..n{}",
                        dim - 1
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            normals,
            mean: find("H"),
            gauss: find("K"),
        })
    }
}

/// Writes `cloud` (and optional labels as extra columns) to `path`.
pub fn save_cloud(
    cloud: &PointCloud,
    labels: Option<&GroundTruth>,
    path: impl AsRef<Path>,
    format: CloudFormat,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(l) = labels {
        l.validate(cloud.len(), cloud.dim())?;
    }
    if format == CloudFormat::Xyz {
        if cloud.dim() != 3 {
            return Err(Error::InvalidParams(format!(
                "xyz requires 3-d points, cloud is {}-d",
                cloud.dim()
            )));
        }
        if labels.is_some_and(has_columns) {
            return Err(Error::InvalidParams("xyz cannot carry label columns".into()));
        }
    }

    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    let (sep, header) = match format {
        CloudFormat::Csv => (",", true),
        CloudFormat::Xyz => (" ", false),
    };
    let dim = cloud.dim();

    if header {
        let mut cols: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
        if let Some(l) = labels {
            if l.normals.is_some() {
                cols.extend((0..dim).map(|k| format!("n{k}")));
            }
            if l.mean_curvature.is_some() {
                cols.push("H".into());
            }
            if l.gaussian_curvature.is_some() {
                cols.push("K".into());
            }
        }
        writeln!(out, "{}", cols.join(sep))?;
    }

    let mut fields = Vec::new();
    for (i, p) in cloud.points().enumerate() {
        fields.clear();
        fields.extend(p.iter().map(|x| fmt_real(*x)));
        if let Some(l) = labels {
            if let Some(n) = &l.normals {
                fields.extend(n[i].iter().map(|x| fmt_real(*x)));
            }
            if let Some(h) = &l.mean_curvature {
                fields.push(fmt_real(h[i]));
            }
            if let Some(k) = &l.gaussian_curvature {
                fields.push(fmt_real(k[i]));
            }
        }
        writeln!(out, "{}", fields.join(sep))?;
    }
    out.flush()?;
    Ok(())
}

fn has_columns(l: &GroundTruth) -> bool {
    l.normals.is_some() || l.mean_curvature.is_some() || l.gaussian_curvature.is_some()
}

/// 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}
