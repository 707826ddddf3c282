//! Experiment configuration, read from TOML.
//!
//! ```toml
//! name = "fig3"
//! task = "normals"              # normals | curvature
//! seeds = [0, 1, 2, 3, 4]
//! metrics = []                  # optional subset of the task's metric columns
//! output_dir = "out/fig3"       # optional; the CLI flag overrides it
//!
//! [surface]
//! kind = ["torus-sectional"]    # torus | torus-sectional | hypersphere
//! n = [1000]
//! major_radius = 2.0            # torus only
//! minor_radius = 1.0
//! theta_max = 6.283185307179586 # optional sectional extents
//! phi_max = 4.71238898038469
//! area_uniform = false
//! dim = 3                       # hypersphere only
//! radius = 1.0
//!
//! [noise]
//! kind = "gaussian"             # gaussian | uniform
//! scale = [0.0, 0.2, 0.4]
//!
//! [estimator]
//! methods = ["pca", "vcm"]      # normals: pca, vcm; curvature: wme, vwme
//! normal = ["knn:50"]           # PCA neighborhood (also used by wme)
//! conv = ["eps:0.2"]            # VCM convolution neighborhood
//! mask = ["knn:30"]             # least-squares mask
//! offset_radius = [0.5]         # VCM offset radius R
//! vcm_samples = []              # explicit counts; empty selects the schedule
//! schedule_eps = 0.05
//! schedule_constant = 1.0
//! m = 2
//!
//! [output]
//! per_point = false             # also write points.csv
//! ```
//!
//! Neighborhoods use the `knn:K`, `eps:E`, `gauss:H[:CUTOFF]` syntax, plus
//! `knnlog:C` for `k = round(C · ln n)`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::neighborhood::NeighborhoodSpec;
use crate::noise::NoiseKind;
use crate::surfaces::TorusParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Normals,
    Curvature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Vcm,
    Wme,
    Vwme,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Vcm => "vcm",
            Method::Wme => "wme",
            Method::Vwme => "vwme",
        }
    }

    fn task(&self) -> Task {
        match self {
            Method::Pca | Method::Vcm => Task::Normals,
            Method::Wme | Method::Vwme => Task::Curvature,
        }
    }

    pub(crate) fn uses_normal(&self) -> bool {
        matches!(self, Method::Pca | Method::Wme)
    }

    pub(crate) fn uses_vcm(&self) -> bool {
        matches!(self, Method::Vcm | Method::Vwme)
    }

    pub(crate) fn uses_mask(&self) -> bool {
        self.task() == Task::Curvature
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SurfaceKind {
    #[serde(rename = "torus")]
    Torus,
    #[serde(rename = "torus-sectional")]
    TorusSectional,
    #[serde(rename = "hypersphere")]
    Hypersphere,
}

impl SurfaceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SurfaceKind::Torus => "torus",
            SurfaceKind::TorusSectional => "torus-sectional",
            SurfaceKind::Hypersphere => "hypersphere",
        }
    }
}

/// A neighborhood rule that may depend on the cloud size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborhoodRule {
    Fixed(NeighborhoodSpec),
    /// kNN with `k = round(c · ln n)`.
    KnnLog(f64),
}

impl NeighborhoodRule {
    pub fn resolve(&self, n: usize) -> Result<NeighborhoodSpec> {
        match *self {
            NeighborhoodRule::Fixed(s) => Ok(s),
            NeighborhoodRule::KnnLog(c) => NeighborhoodSpec::knn((c * (n as f64).ln()).round().max(1.0) as usize),
        }
    }
}

impl FromStr for NeighborhoodRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().strip_prefix("knnlog:") {
            Some(c) => {
                let c: f64 = c
                    .parse()
                    .map_err(|_| Error::Config(format!("cannot parse neighborhood {s:?}")))?;
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::Config(format!("knnlog constant must be > 0 in {s:?}")));
                }
                Ok(NeighborhoodRule::KnnLog(c))
            }
            None => s.parse().map(NeighborhoodRule::Fixed),
        }
    }
}

impl fmt::Display for NeighborhoodRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeighborhoodRule::Fixed(s) => write!(f, "{s}"),
            NeighborhoodRule::KnnLog(c) => write!(f, "knnlog:{c}"),
        }
    }
}

impl<'de> Deserialize<'de> for NeighborhoodRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub kind: Vec<SurfaceKind>,
    pub n: Vec<usize>,
    #[serde(default = "default_major")]
    pub major_radius: f64,
    #[serde(default = "default_minor")]
    pub minor_radius: f64,
    pub theta_max: Option<f64>,
    pub phi_max: Option<f64>,
    #[serde(default)]
    pub area_uniform: bool,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_major() -> f64 {
    2.0
}
fn default_minor() -> f64 {
    1.0
}
fn default_dim() -> usize {
    3
}
fn default_radius() -> f64 {
    1.0
}

impl SurfaceConfig {
    /// Torus parameters for a torus kind.
    pub fn torus(&self, kind: SurfaceKind) -> TorusParams {
        let mut p = match kind {
            SurfaceKind::TorusSectional => TorusParams::sectional(self.major_radius, self.minor_radius),
            _ => TorusParams::full(self.major_radius, self.minor_radius),
        };
        if kind == SurfaceKind::TorusSectional {
            if let Some(t) = self.theta_max {
                p.theta_range.1 = t;
            }
            if let Some(f) = self.phi_max {
                p.phi_range.1 = f;
            }
        }
        p.area_uniform = self.area_uniform;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_noise_kind")]
    pub kind: String,
    #[serde(default = "default_scales")]
    pub scale: Vec<f64>,
}

fn default_noise_kind() -> String {
    "gaussian".into()
}
fn default_scales() -> Vec<f64> {
    vec![0.0]
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: default_noise_kind(),
            scale: default_scales(),
        }
    }
}

impl NoiseConfig {
    pub fn kind_at(&self, scale: f64) -> Result<NoiseKind> {
        NoiseKind::parse(&self.kind, scale)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub methods: Vec<Method>,
    #[serde(default)]
    pub normal: Vec<NeighborhoodRule>,
    #[serde(default)]
    pub conv: Vec<NeighborhoodRule>,
    #[serde(default)]
    pub mask: Vec<NeighborhoodRule>,
    #[serde(default)]
    pub offset_radius: Vec<f64>,
    #[serde(default)]
    pub vcm_samples: Vec<usize>,
    #[serde(default = "default_schedule_eps")]
    pub schedule_eps: f64,
    #[serde(default = "default_schedule_constant")]
    pub schedule_constant: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    pub ridge: Option<f64>,
}

fn default_schedule_eps() -> f64 {
    0.05
}
fn default_schedule_constant() -> f64 {
    1.0
}
fn default_m() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub per_point: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub task: Task,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub metrics: Vec<String>,
    pub output_dir: Option<PathBuf>,
    pub surface: SurfaceConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

pub const NORMAL_METRICS: &[&str] = &["mean_cos", "mean_abs_cos", "flip_fraction"];
pub const CURVATURE_METRICS: &[&str] =
    &["mse_h_abs", "mse_h_signed", "mse_k_abs", "sign_agreement", "ridge_rate"];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Metric columns written for this task, in order.
    pub fn metric_columns(&self) -> Vec<&'static str> {
        let all = match self.task {
            Task::Normals => NORMAL_METRICS,
            Task::Curvature => CURVATURE_METRICS,
        };
        all.iter()
            .copied()
            .filter(|m| self.metrics.is_empty() || self.metrics.iter().any(|x| x == m))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::Config(format!("{name} must not be empty")))
            } else {
                Ok(())
            }
        };
        nonempty("seeds", self.seeds.len())?;
        nonempty("surface.kind", self.surface.kind.len())?;
        nonempty("surface.n", self.surface.n.len())?;
        nonempty("noise.scale", self.noise.scale.len())?;
        nonempty("estimator.methods", self.estimator.methods.len())?;
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.surface.n.contains(&0) {
            return bad("surface.n entries must be >= 1".into());
        }
        for s in &self.noise.scale {
            if !(*s >= 0.0 && s.is_finite()) {
                return Err(Error::NegativeScale(*s));
            }
            self.noise.kind_at(*s)?;
        }
        let est = &self.estimator;
        for m in &est.methods {
            if m.task() != self.task {
                return bad(format!("method {} does not belong to task {:?}", m.name(), self.task));
            }
            if m.uses_normal() {
                nonempty("estimator.normal", est.normal.len())?;
            }
            if m.uses_vcm() {
                nonempty("estimator.conv", est.conv.len())?;
                nonempty("estimator.offset_radius", est.offset_radius.len())?;
            }
            if m.uses_mask() {
                nonempty("estimator.mask", est.mask.len())?;
            }
        }
        if est.offset_radius.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("offset_radius entries must be > 0".into());
        }
        if est.vcm_samples.contains(&0) {
            return bad("vcm_samples entries must be >= 1".into());
        }
        if !(est.schedule_eps > 0.0 && est.schedule_eps < 1.0) || !(est.schedule_constant > 0.0) {
            return bad("schedule_eps must be in (0, 1) and schedule_constant > 0".into());
        }
        for kind in &self.surface.kind {
            match kind {
                SurfaceKind::Hypersphere => {
                    if est.m + 1 != self.surface.dim {
                        return bad(format!(
                            "hypersphere in R^{} has intrinsic dimension {}, estimator.m is {}",
                            self.surface.dim,
                            self.surface.dim - 1,
                            est.m
                        ));
                    }
                }
                k => {
                    self.surface.torus(*k).validate()?;
                    if est.m != 2 {
                        return bad("torus surfaces need estimator.m = 2".into());
                    }
                }
            }
        }
        let known = match self.task {
            Task::Normals => NORMAL_METRICS,
            Task::Curvature => CURVATURE_METRICS,
        };
        if let Some(m) = self.metrics.iter().find(|m| !known.contains(&m.as_str())) {
            return bad(format!("unknown metric {m:?} for task {:?}", self.task));
        }
        Ok(())
    }
}
