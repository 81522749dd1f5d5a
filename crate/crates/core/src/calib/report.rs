use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Analysis, FrameStack, PixelRect};
use crate::model::{ModeId, NoiseModelCoefficients};

use super::axial::{axial_statistics, AxialSample};
use super::fit::{fit_axial_model, Aggregation, ExponentGrid, GridScore};
use super::lateral::{extract_edge, fit_lateral_sigma, EdgeSearch, LateralSample};
use super::plane::{fit_plane_frame, PlaneFit};
use super::roi::axial_roi;
use super::stats::temporal_mean;

pub const FIT_SCHEMA_VERSION: u32 = 1;

/// ROI (the sidecar override, else the automatic one) and the plane fitted
/// to the temporal mean inside it.
pub fn axial_setup(stack: &FrameStack) -> Result<(PixelRect, PlaneFit)> {
    let mean = temporal_mean(stack);
    let roi = match stack.meta().roi {
        Some(roi) => roi,
        None => axial_roi(&mean)?,
    };
    let plane = fit_plane_frame(&mean, stack.intrinsics(), &roi)?;
    Ok((roi, plane))
}

#[derive(Clone, Debug, PartialEq)]
pub enum StackAnalysis {
    Axial {
        mode_id: ModeId,
        nominal_distance: f64,
        nominal_angle: f64,
        sample: AxialSample,
    },
    Lateral(LateralSample),
}

/// Statistics of one stack, chosen by its `analysis` tag.
pub fn analyze_stack(stack: &FrameStack) -> Result<StackAnalysis> {
    let meta = stack.meta();
    match meta.analysis {
        Analysis::Axial => {
            let (roi, plane) = axial_setup(stack)?;
            Ok(StackAnalysis::Axial {
                mode_id: meta.mode_id,
                nominal_distance: meta.nominal_distance,
                nominal_angle: meta.nominal_angle,
                sample: axial_statistics(stack, &roi, &plane)?,
            })
        }
        Analysis::Lateral => Ok(StackAnalysis::Lateral(extract_edge(stack, &EdgeSearch::for_stack(stack)?)?)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxialRow {
    pub nominal_distance: f64,
    pub nominal_angle: f64,
    pub z: f64,
    pub theta_deg: f64,
    pub sigma_measured: f64,
    pub pixel_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LateralRow {
    pub nominal_distance: f64,
    pub nominal_angle: f64,
    pub sigma_px: f64,
    pub line_column: f64,
    pub edge_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxialFitSummary {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub n: f64,
    pub mse: f64,
    pub mse_by_n: Vec<GridScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeFit {
    pub mode_id: ModeId,
    pub axial_conditions: Vec<AxialRow>,
    pub lateral_conditions: Vec<LateralRow>,
    pub axial_fit: Option<AxialFitSummary>,
    pub sigma_x: Option<f64>,
    /// Present when both the axial and the lateral fit succeeded.
    pub coefficients: Option<NoiseModelCoefficients>,
    /// Why a fit is missing.
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub aggregation: Aggregation,
    pub exponent_grid: ExponentGrid,
    pub stack_count: usize,
    pub tool_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub modes: Vec<ModeFit>,
    pub metadata: FitMetadata,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn mode(&self, mode_id: ModeId) -> Option<&ModeFit> {
        self.modes.iter().find(|m| m.mode_id == mode_id)
    }
}

type AxialEntry = (f64, f64, AxialSample);

/// Collects per-stack analyses, then fits each mode.
#[derive(Clone, Debug, Default)]
pub struct FitReportBuilder {
    grid: ExponentGrid,
    aggregation: Aggregation,
    axial: BTreeMap<ModeId, Vec<AxialEntry>>,
    lateral: BTreeMap<ModeId, Vec<LateralSample>>,
    stacks: usize,
}

impl FitReportBuilder {
    pub fn new(grid: ExponentGrid, aggregation: Aggregation) -> Self {
        Self {
            grid,
            aggregation,
            ..Self::default()
        }
    }

    pub fn add(&mut self, analysis: StackAnalysis) {
        self.stacks += 1;
        match analysis {
            StackAnalysis::Axial {
                mode_id,
                nominal_distance,
                nominal_angle,
                sample,
            } => self
                .axial
                .entry(mode_id)
                .or_default()
                .push((nominal_distance, nominal_angle, sample)),
            StackAnalysis::Lateral(sample) => self.lateral.entry(sample.condition.mode_id).or_default().push(sample),
        }
    }

    pub fn add_stack(&mut self, stack: &FrameStack) -> Result<()> {
        self.add(analyze_stack(stack)?);
        Ok(())
    }

    pub fn finish(mut self) -> Result<FitReport> {
        if self.stacks == 0 {
            return Err(Error::InsufficientData("no stacks to fit".into()));
        }
        let mut modes: Vec<ModeId> = self.axial.keys().chain(self.lateral.keys()).copied().collect();
        modes.sort();
        modes.dedup();
        let by_condition = |a: f64, b: f64, c: f64, d: f64| a.total_cmp(&c).then(b.total_cmp(&d));
        let mut out = Vec::new();
        for mode_id in modes {
            let mut notes = Vec::new();
            let mut axial = self.axial.remove(&mode_id).unwrap_or_default();
            axial.sort_by(|x, y| by_condition(x.0, x.1, y.0, y.1));
            let mut lateral = self.lateral.remove(&mode_id).unwrap_or_default();
            lateral.sort_by(|x, y| {
                by_condition(
                    x.condition.nominal_distance,
                    x.condition.nominal_angle,
                    y.condition.nominal_distance,
                    y.condition.nominal_angle,
                )
            });
            let samples: Vec<AxialSample> = axial.iter().map(|e| e.2.clone()).collect();
            let axial_fit = if samples.is_empty() {
                notes.push("no axial stacks".to_string());
                None
            } else {
                match fit_axial_model(&samples, &self.grid, self.aggregation) {
                    Ok(f) => Some(f),
                    Err(e) => {
                        notes.push(format!("axial fit failed: {}: {e}", e.kind()));
                        None
                    }
                }
            };
            let sigma_x = if lateral.is_empty() {
                notes.push("no lateral stacks".to_string());
                None
            } else {
                Some(fit_lateral_sigma(&lateral)?)
            };
            let coefficients = match (&axial_fit, sigma_x) {
                (Some(f), Some(s)) => Some(f.coefficients(mode_id, s)?),
                _ => None,
            };
            out.push(ModeFit {
                mode_id,
                axial_conditions: axial
                    .iter()
                    .map(|(dist, angle, s)| AxialRow {
                        nominal_distance: *dist,
                        nominal_angle: *angle,
                        z: s.z,
                        theta_deg: s.theta.to_degrees(),
                        sigma_measured: s.sigma_measured,
                        pixel_count: s.pixel_count,
                    })
                    .collect(),
                lateral_conditions: lateral
                    .iter()
                    .map(|s| LateralRow {
                        nominal_distance: s.condition.nominal_distance,
                        nominal_angle: s.condition.nominal_angle,
                        sigma_px: s.sigma_px,
                        line_column: s.line_column,
                        edge_count: s.edge_count,
                    })
                    .collect(),
                axial_fit: axial_fit.map(|f| AxialFitSummary {
                    a: f.a,
                    b: f.b,
                    c: f.c,
                    d: f.d,
                    n: f.n,
                    mse: f.mse,
                    mse_by_n: f.scores,
                }),
                sigma_x,
                coefficients,
                notes,
            });
        }
        Ok(FitReport {
            schema_version: FIT_SCHEMA_VERSION,
            modes: out,
            metadata: FitMetadata {
                aggregation: self.aggregation,
                exponent_grid: self.grid,
                stack_count: self.stacks,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        })
    }
}
