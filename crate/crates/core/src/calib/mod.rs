//! Recovering noise-model parameters from frame stacks.
//!
//! Axial pipeline per stack: temporal mean frame → [`axial_roi`] →
//! [`fit_plane`] → [`axial_statistics`]; the per-condition samples then go to
//! [`fit_axial_model`]. Lateral pipeline per stack: [`extract_edge`]; the
//! per-condition spreads go to [`fit_lateral_sigma`].

mod axial;
mod fit;
mod lateral;
mod plane;
pub mod report;
mod roi;
mod stats;

pub use axial::{axial_statistics, AxialSample, PixelStat, MIN_AXIAL_FRAMES};
pub use fit::{fit_axial_model, Aggregation, AxialFit, ExponentGrid, GridScore};
pub use lateral::{extract_edge, fit_lateral_sigma, percentile, EdgeSearch, LateralSample};
pub use plane::{fit_plane, fit_plane_frame, fit_plane_points, PlaneFit};
pub use roi::{axial_roi, ROI_FRACTION};
pub use stats::{temporal_mean, temporal_stats, PixelSeries, MIN_VALID_FRACTION};
pub use report::{analyze_stack, axial_setup, FitReport, FitReportBuilder, StackAnalysis};
