//! Pixel-wise KL divergence between measured noise and a model, and the
//! report built from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calib::report::axial_setup;
use crate::calib::{extract_edge, temporal_stats, EdgeSearch, PlaneFit, MIN_AXIAL_FRAMES};
use crate::error::{Error, Result};
use crate::frame::{Analysis, FrameStack, PixelRect};
use crate::model::{gaussian_kl, ModeId, NoiseModelCoefficients, THETA_MAX};

pub const KL_SCHEMA_VERSION: u32 = 1;
/// Fewest edge residuals accepted by [`lateral_kl`].
pub const MIN_RESIDUALS: usize = 30;

/// Mean axial KL over a ROI. `kl` is `None` when every pixel was skipped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxialKl {
    pub kl: Option<f64>,
    /// Pixels that contributed.
    pub pixel_count: usize,
    /// Pixels left out because their temporal std is zero.
    pub skipped: usize,
}

/// Per pixel, KL(N(temporal mean, temporal std²) ‖ N(plane depth, σ_z²)),
/// averaged over the ROI.
pub fn axial_kl(stack: &FrameStack, roi: &PixelRect, plane: &PlaneFit, coeffs: &NoiseModelCoefficients) -> Result<AxialKl> {
    if stack.len() < MIN_AXIAL_FRAMES {
        return Err(Error::InsufficientData(format!(
            "{} frames, need at least {MIN_AXIAL_FRAMES}",
            stack.len()
        )));
    }
    let k = stack.intrinsics();
    let w = stack.width();
    let stats = temporal_stats(stack);
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for (x, y) in roi.pixels() {
        if x >= w || y >= stack.height() {
            continue;
        }
        let Some(series) = stats[y * w + x] else { continue };
        let Some(z) = plane.depth_at(k, x, y) else { continue };
        if series.std == 0.0 {
            skipped += 1;
            continue;
        }
        let theta = plane.incidence_at(k, x, y).min(THETA_MAX);
        let sigma = coeffs.axial_sigma(z, theta).map_err(|e| e.at_pixel(x, y))?;
        sum += gaussian_kl(series.mean, series.std, z, sigma)?;
        used += 1;
    }
    if used == 0 && skipped == 0 {
        return Err(Error::InsufficientData("ROI is empty after validity filtering".into()));
    }
    Ok(AxialKl {
        kl: (used > 0).then(|| sum / used as f64),
        pixel_count: used,
        skipped,
    })
}

/// KL(N(mean, std²) of the residuals ‖ N(0, σ_x²)).
pub fn lateral_kl(residuals: &[f64], sigma_x: f64) -> Result<f64> {
    if residuals.len() < MIN_RESIDUALS {
        return Err(Error::InsufficientData(format!(
            "{} residuals, need at least {MIN_RESIDUALS}",
            residuals.len()
        )));
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    gaussian_kl(mean, var.sqrt(), 0.0, sigma_x)
}

/// KL of one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlEntry {
    pub mode_id: ModeId,
    pub analysis: Analysis,
    pub nominal_distance: f64,
    pub nominal_angle: f64,
    /// Nats; `None` when no pixel could be scored.
    pub kl: Option<f64>,
    /// Pixels (axial) or edge residuals (lateral) behind `kl`.
    pub pixel_count: usize,
    pub skipped: usize,
}

/// Scores one stack against `coeffs`.
pub fn validate_stack(stack: &FrameStack, coeffs: &NoiseModelCoefficients) -> Result<KlEntry> {
    let meta = stack.meta();
    if meta.mode_id != coeffs.mode_id {
        return Err(Error::Invalid(format!(
            "stack is {} but the coefficients are for {}",
            meta.mode_id, coeffs.mode_id
        )));
    }
    let (kl, pixel_count, skipped) = match meta.analysis {
        Analysis::Axial => {
            let (roi, plane) = axial_setup(stack)?;
            let r = axial_kl(stack, &roi, &plane, coeffs)?;
            (r.kl, r.pixel_count, r.skipped)
        }
        Analysis::Lateral => {
            let sample = extract_edge(stack, &EdgeSearch::for_stack(stack)?)?;
            let kl = lateral_kl(&sample.residuals, coeffs.sigma_x)?;
            (Some(kl), sample.residuals.len(), 0)
        }
    };
    Ok(KlEntry {
        mode_id: meta.mode_id,
        analysis: meta.analysis,
        nominal_distance: meta.nominal_distance,
        nominal_angle: meta.nominal_angle,
        kl,
        pixel_count,
        skipped,
    })
}

/// Count-weighted mean KL; `None` without scored entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KlAverage {
    pub kl: Option<f64>,
    pub pixel_count: usize,
    pub conditions: usize,
}

impl KlAverage {
    fn of<'a>(entries: impl Iterator<Item = &'a KlEntry>) -> Self {
        let (mut sum, mut pixels, mut conditions) = (0.0, 0usize, 0usize);
        for e in entries {
            if let Some(kl) = e.kl {
                sum += kl * e.pixel_count as f64;
                pixels += e.pixel_count;
                conditions += 1;
            }
        }
        Self {
            kl: (pixels > 0).then(|| sum / pixels as f64),
            pixel_count: pixels,
            conditions,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeAverage {
    pub mode_id: ModeId,
    pub axial: KlAverage,
    pub lateral: KlAverage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverallAverage {
    pub axial: KlAverage,
    pub lateral: KlAverage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub schema_version: u32,
    pub entries: Vec<KlEntry>,
    pub per_mode: Vec<ModeAverage>,
    pub overall: OverallAverage,
}

impl KlReport {
    pub fn new(mut entries: Vec<KlEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InsufficientData("no conditions to report".into()));
        }
        if let Some(e) = entries.iter().find(|e| e.kl.is_some_and(|k| !(k >= 0.0))) {
            return Err(Error::Invalid(format!("negative or NaN KL {:?}", e.kl)));
        }
        entries.sort_by(|a, b| {
            (a.mode_id, a.analysis)
                .cmp(&(b.mode_id, b.analysis))
                .then(a.nominal_distance.total_cmp(&b.nominal_distance))
                .then(a.nominal_angle.total_cmp(&b.nominal_angle))
        });
        let mut modes: Vec<ModeId> = entries.iter().map(|e| e.mode_id).collect();
        modes.dedup();
        let of_kind = |kind: Analysis| move |e: &&KlEntry| e.analysis == kind;
        let per_mode = modes
            .into_iter()
            .map(|m| {
                let mine = || entries.iter().filter(move |e| e.mode_id == m);
                ModeAverage {
                    mode_id: m,
                    axial: KlAverage::of(mine().filter(of_kind(Analysis::Axial))),
                    lateral: KlAverage::of(mine().filter(of_kind(Analysis::Lateral))),
                }
            })
            .collect();
        let overall = OverallAverage {
            axial: KlAverage::of(entries.iter().filter(of_kind(Analysis::Axial))),
            lateral: KlAverage::of(entries.iter().filter(of_kind(Analysis::Lateral))),
        };
        Ok(Self {
            schema_version: KL_SCHEMA_VERSION,
            entries,
            per_mode,
            overall,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(Error::Invalid(format!("unknown report format {other:?}"))),
        }
    }
}

fn cell(kl: Option<f64>) -> String {
    kl.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Angle key with micro-degree resolution so table columns group exactly.
fn angle_key(deg: f64) -> i64 {
    (deg * 1e6).round() as i64
}

fn text_table(report: &KlReport) -> String {
    let mut angles: Vec<i64> = report
        .entries
        .iter()
        .filter(|e| e.analysis == Analysis::Axial)
        .map(|e| angle_key(e.nominal_angle))
        .collect();
    angles.sort();
    angles.dedup();
    let mut header = vec!["mode".to_string()];
    header.extend(angles.iter().map(|&k| format!("{}°", k as f64 / 1e6)));
    header.push("all".into());
    header.push("lateral".into());

    let mut rows = vec![header];
    for m in &report.per_mode {
        let mut by_angle: BTreeMap<i64, Vec<&KlEntry>> = BTreeMap::new();
        for e in report
            .entries
            .iter()
            .filter(|e| e.mode_id == m.mode_id && e.analysis == Analysis::Axial)
        {
            by_angle.entry(angle_key(e.nominal_angle)).or_default().push(e);
        }
        let mut row = vec![m.mode_id.to_string()];
        row.extend(angles.iter().map(|k| {
            cell(by_angle.get(k).and_then(|v| KlAverage::of(v.iter().copied()).kl))
        }));
        row.push(cell(m.axial.kl));
        row.push(cell(m.lateral.kl));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::from("average KL divergence (nats), axial by incidence angle\n");
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, &w))| {
                let pad = w - s.chars().count();
                if i == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    let _ = writeln!(
        out,
        "overall  axial {}  lateral {}",
        cell(report.overall.axial.kl),
        cell(report.overall.lateral.kl)
    );
    out
}

/// Renders the report. Output depends only on the report's contents.
pub fn emit_report(report: &KlReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Text => Ok(text_table(report)),
    }
}
