//! Config-driven experiment sweeps with CSV output and SVG plots.

pub mod config;
pub mod plot;
pub mod sweep;

pub use config::{ExperimentConfig, Method, NeighborhoodRule, SurfaceKind, Task};
pub use plot::{parse_filter, plot, render_file, PlotKind, PlotSpec};
pub use sweep::{grid, run_cell, run_sweep, Cell, CellResult, SweepSummary};
