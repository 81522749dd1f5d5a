use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FrameStack, PixelRect};
use crate::scene::ray_incidence;

use super::plane::PlaneFit;
use super::stats::temporal_stats;

/// Fewest frames accepted for temporal statistics.
pub const MIN_AXIAL_FRAMES: usize = 30;

/// Temporal statistics and plane geometry of one ROI pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelStat {
    pub x: usize,
    pub y: usize,
    /// Plane-predicted Z-depth, meters.
    pub z: f64,
    /// Incidence angle of the pixel ray on the fitted plane, radians.
    pub theta: f64,
    /// Temporal mean depth, meters.
    pub mean: f64,
    /// Temporal standard deviation, meters.
    pub sigma: f64,
}

/// Axial noise observed under one capture condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxialSample {
    /// Mean plane depth over the ROI, meters.
    pub z: f64,
    /// Angle between the plane normal and the mean ROI viewing direction, radians.
    pub theta: f64,
    /// Mean of the per-pixel temporal standard deviations, meters.
    pub sigma_measured: f64,
    pub pixel_count: usize,
    /// Per-pixel detail; empty for samples built by hand.
    #[serde(skip)]
    pub pixels: Vec<PixelStat>,
}

impl AxialSample {
    /// A condition-level sample without per-pixel detail.
    pub fn summary(z: f64, theta: f64, sigma_measured: f64, pixel_count: usize) -> Self {
        Self {
            z,
            theta,
            sigma_measured,
            pixel_count,
            pixels: Vec::new(),
        }
    }
}

/// Per-pixel temporal std over the ROI against the fitted plane.
pub fn axial_statistics(stack: &FrameStack, roi: &PixelRect, plane: &PlaneFit) -> Result<AxialSample> {
    if stack.len() < MIN_AXIAL_FRAMES {
        return Err(Error::InsufficientData(format!(
            "{} frames, need at least {MIN_AXIAL_FRAMES}",
            stack.len()
        )));
    }
    let k = stack.intrinsics();
    let w = stack.width();
    let stats = temporal_stats(stack);
    let pixels: Vec<PixelStat> = roi
        .pixels()
        .filter(|&(x, y)| x < w && y < stack.height())
        .filter_map(|(x, y)| {
            let series = stats[y * w + x]?;
            let z = plane.depth_at(k, x, y)?;
            Some(PixelStat {
                x,
                y,
                z,
                theta: plane.incidence_at(k, x, y),
                mean: series.mean,
                sigma: series.std,
            })
        })
        .collect();
    if pixels.is_empty() {
        return Err(Error::InsufficientData("ROI is empty after validity filtering".into()));
    }
    let count = pixels.len() as f64;
    let view: Vector3<f64> = pixels
        .iter()
        .map(|p| k.ray(p.x as f64, p.y as f64).normalize())
        .sum();
    Ok(AxialSample {
        z: pixels.iter().map(|p| p.z).sum::<f64>() / count,
        theta: ray_incidence(&plane.normal, &view),
        sigma_measured: pixels.iter().map(|p| p.sigma).sum::<f64>() / count,
        pixel_count: pixels.len(),
        pixels,
    })
}
