//! Shape-operator estimation on point clouds.
//!
//! Pipeline: sample or load a cloud, build a [`SpatialIndex`], estimate
//! normals (PCA or Voronoi covariance), then fit the Weingarten map by
//! weighted least squares and read off mean and Gaussian curvature.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod neighborhood;
pub mod noise;
pub mod normals;
pub mod pointcloud;
pub mod random;
pub mod surfaces;
pub mod vcm;
pub mod weingarten;

pub use error::{Error, Result};
pub use linalg::{sym_eigen, weingarten_lls, EigenPair, LlsSolution, SymMatrix};
pub use neighborhood::{build_index, neighbors, NeighborhoodSpec, SpatialIndex, WeightedNeighbors};
pub use noise::{add_noise, NoiseKind};
pub use pointcloud::{load_cloud, load_labeled, save_cloud, CloudFormat, GroundTruth, PointCloud};
pub use surfaces::{sample_hypersphere, sample_torus, TorusParams};
pub use normals::{align_frames, oriented_vcm_frame, pca_frame, pca_frames, vcm_frame, vcm_frames, TangentFrame};
pub use vcm::{brute_vcm, convolve_vcm, mcvcm, mcvcm_with, sample_schedule, McvcmVariant, TensorField};
pub use weingarten::{curvature, curvatures, vwme, wme, wme_pca, Curvature, ShapeEstimate, ShapeField, VwmeParams};
pub use metrics::{cosine_similarity, curvature_mse, summarize, CurvatureKind, MseMode, MseReport, NormalReport, Summary};
