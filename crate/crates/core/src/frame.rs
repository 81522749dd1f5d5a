//! Depth frames, frame stacks and the DPF1 container.
//!
//! DPF1 layout (little-endian):
//!
//! ```text
//! "DPF1" | u32 width | u32 height | u32 frame_count | f32 depths[frame_count][height][width]
//! ```
//!
//! Depths are meters; NaN marks an invalid pixel. Capture metadata lives in a
//! UTF-8 JSON sidecar next to the data file, named `<path>.meta.json`.
//!
//! Frames hold `f64` in memory. Writing rounds to binary32, so a stack read
//! from disk re-serializes to the identical bytes.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModeId;
use crate::scene::{Background, PlanarScene};

pub const DPF_MAGIC: &[u8; 4] = b"DPF1";
const HEADER_LEN: usize = 16;

/// Finite depths must lie strictly below this bound, in meters.
pub const MAX_DEPTH: f64 = 100.0;

/// Pinhole intrinsics. Pixel `(col, row)` has its center at image
/// coordinates `(u, v) = (col, row)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Builds intrinsics from a resolution and full field of view in degrees,
    /// with the principal point at the image center.
    pub fn from_fov(width: usize, height: usize, hfov_deg: f64, vfov_deg: f64) -> Result<Self> {
        let cx = width as f64 / 2.0;
        let cy = height as f64 / 2.0;
        let fx = cx / (hfov_deg / 2.0).to_radians().tan();
        let fy = cy / (vfov_deg / 2.0).to_radians().tan();
        Self::new(width, height, fx, fy, cx, cy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("intrinsics with zero resolution".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::Invalid("focal lengths must be positive".into()));
        }
        if !(0.0..=self.width as f64).contains(&self.cx) || !(0.0..=self.height as f64).contains(&self.cy) {
            return Err(Error::Invalid("principal point outside the image".into()));
        }
        Ok(())
    }

    /// Viewing ray through `(u, v)`, scaled so its Z component is 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Camera-frame point at Z-depth `z` behind pixel `(u, v)`.
    #[inline]
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        self.ray(u, v) * z
    }
}

/// 224×172 sensor with a 56°×44° field of view.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::from_fov(224, 172, 56.0, 44.0).expect("built-in intrinsics are valid")
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        default_intrinsics()
    }
}

/// One depth image in meters, row-major, NaN for invalid pixels.
#[derive(Clone, Debug)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    depths: Vec<f64>,
}

/// Equal when the shapes match and every pixel is either invalid in both
/// frames or holds the same depth in both.
impl PartialEq for DepthFrame {
    fn eq(&self, other: &Self) -> bool {
        (self.width, self.height) == (other.width, other.height)
            && self
                .depths
                .iter()
                .zip(&other.depths)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, depths: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid("frame with zero size".into()));
        }
        if width.checked_mul(height) != Some(depths.len()) {
            return Err(Error::Invalid(format!(
                "{}x{} frame needs {} depths, got {}",
                width,
                height,
                width * height,
                depths.len()
            )));
        }
        if let Some((i, d)) = depths
            .iter()
            .enumerate()
            .find(|(_, d)| !d.is_nan() && !(**d > 0.0 && **d < MAX_DEPTH))
        {
            return Err(Error::Invalid(format!(
                "depth {d} at ({}, {}) outside (0, {MAX_DEPTH}) m",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            depths,
        })
    }

    /// Frame where every pixel has the same depth (or NaN).
    pub fn filled(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height])
    }

    /// Callers guarantee the invariants.
    pub(crate) fn from_parts(width: usize, height: usize, depths: Vec<f64>) -> Self {
        debug_assert_eq!(width * height, depths.len());
        Self {
            width,
            height,
            depths,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn into_depths(self) -> Vec<f64> {
        self.depths
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.depths[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        !self.get(x, y).is_nan()
    }

    pub fn valid_count(&self) -> usize {
        self.depths.iter().filter(|d| !d.is_nan()).count()
    }

    /// The same frame with every depth rounded to binary32, i.e. exactly what
    /// a DPF1 round trip yields.
    pub fn to_f32_precision(&self) -> Self {
        Self::from_parts(
            self.width,
            self.height,
            self.depths.iter().map(|&d| f64::from(d as f32)).collect(),
        )
    }
}

/// What a stack was recorded for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    /// Flat target; temporal depth statistics.
    #[default]
    Axial,
    /// Target with a vertical edge; edge position statistics.
    Lateral,
}

/// Nominal setup of one measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureCondition {
    pub mode_id: ModeId,
    /// Meters.
    pub nominal_distance: f64,
    /// Degrees.
    pub nominal_angle: f64,
    pub intrinsics: CameraIntrinsics,
}

impl CaptureCondition {
    pub fn new(mode_id: ModeId, nominal_distance: f64, nominal_angle: f64, intrinsics: CameraIntrinsics) -> Result<Self> {
        let c = Self {
            mode_id,
            nominal_distance,
            nominal_angle,
            intrinsics,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.mode_id.range();
        if !(self.nominal_distance >= lo && self.nominal_distance <= hi) {
            return Err(Error::Invalid(format!(
                "distance {} m outside the {} range {lo}-{hi} m",
                self.nominal_distance, self.mode_id
            )));
        }
        if !(0.0..=75.0).contains(&self.nominal_angle) {
            return Err(Error::Invalid(format!(
                "incidence angle {}° outside [0°, 75°]",
                self.nominal_angle
            )));
        }
        self.intrinsics.validate()
    }
}

/// Pixel rectangle `[x0, x0 + width) × [y0, y0 + height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    pub fn x1(&self) -> usize {
        self.x0 + self.width
    }

    pub fn y1(&self) -> usize {
        self.y0 + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1()).contains(&x) && (self.y0..self.y1()).contains(&y)
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..self.y1()).flat_map(move |y| (self.x0..self.x1()).map(move |x| (x, y)))
    }
}

/// Everything the sidecar carries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackMeta {
    pub mode_id: ModeId,
    pub nominal_distance: f64,
    pub nominal_angle: f64,
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub analysis: Analysis,
    /// Half-size of a rendered target; absent for an unbounded plane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane_extent: Option<f64>,
    /// Present when the stack was rendered from a planar scene.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Background>,
    /// Axial region override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<PixelRect>,
    /// Column range `[start, end)` searched for a lateral edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_band: Option<[usize; 2]>,
}

impl StackMeta {
    pub fn new(condition: CaptureCondition) -> Self {
        Self {
            mode_id: condition.mode_id,
            nominal_distance: condition.nominal_distance,
            nominal_angle: condition.nominal_angle,
            intrinsics: condition.intrinsics,
            analysis: Analysis::Axial,
            plane_extent: None,
            background: None,
            roi: None,
            edge_band: None,
        }
    }

    /// Records the scene a stack was rendered from.
    pub fn for_scene(mode_id: ModeId, scene: &PlanarScene, intrinsics: CameraIntrinsics) -> Result<Self> {
        let condition = CaptureCondition::new(mode_id, scene.plane_distance, scene.incidence_angle, intrinsics)?;
        Ok(Self {
            plane_extent: scene.plane_extent,
            background: Some(scene.background),
            ..Self::new(condition)
        })
    }

    pub fn with_analysis(self, analysis: Analysis) -> Self {
        Self { analysis, ..self }
    }

    pub fn condition(&self) -> CaptureCondition {
        CaptureCondition {
            mode_id: self.mode_id,
            nominal_distance: self.nominal_distance,
            nominal_angle: self.nominal_angle,
            intrinsics: self.intrinsics,
        }
    }

    /// The rendered scene, when the sidecar describes one.
    pub fn scene(&self) -> Option<PlanarScene> {
        self.background.map(|background| PlanarScene {
            plane_distance: self.nominal_distance,
            incidence_angle: self.nominal_angle,
            plane_extent: self.plane_extent,
            background,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.condition().validate()?;
        if let Some(e) = self.plane_extent {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Invalid(format!("plane_extent {e} must be positive")));
            }
        }
        if let Some(Background::Depth(d)) = self.background {
            if !(d > 0.0 && d < MAX_DEPTH) {
                return Err(Error::Invalid(format!("background depth {d} outside (0, {MAX_DEPTH}) m")));
            }
        }
        if let Some(r) = self.roi {
            if r.area() == 0 || r.x1() > self.intrinsics.width || r.y1() > self.intrinsics.height {
                return Err(Error::Invalid("roi outside the image".into()));
            }
        }
        if let Some([a, b]) = self.edge_band {
            if a >= b || b > self.intrinsics.width {
                return Err(Error::Invalid(format!("edge band [{a}, {b}) invalid")));
            }
        }
        Ok(())
    }
}

/// Frames of one static scene under one capture condition.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack {
    frames: Vec<DepthFrame>,
    meta: StackMeta,
}

impl FrameStack {
    pub fn new(frames: Vec<DepthFrame>, meta: StackMeta) -> Result<Self> {
        meta.validate()?;
        let first = frames
            .first()
            .ok_or_else(|| Error::Invalid("a stack needs at least one frame".into()))?;
        let (w, h) = (first.width, first.height);
        if frames.iter().any(|f| f.width != w || f.height != h) {
            return Err(Error::Invalid("frames in a stack must share dimensions".into()));
        }
        if (w, h) != (meta.intrinsics.width, meta.intrinsics.height) {
            return Err(Error::Invalid(format!(
                "frames are {w}x{h} but intrinsics describe {}x{}",
                meta.intrinsics.width, meta.intrinsics.height
            )));
        }
        Ok(Self { frames, meta })
    }

    pub fn frames(&self) -> &[DepthFrame] {
        &self.frames
    }

    pub fn meta(&self) -> &StackMeta {
        &self.meta
    }

    pub fn condition(&self) -> CaptureCondition {
        self.meta.condition()
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.meta.intrinsics
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn into_frames(self) -> Vec<DepthFrame> {
        self.frames
    }
}

/// `<path>.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Encodes the stack's frames as DPF1 bytes.
pub fn encode_dpf(stack: &FrameStack) -> Result<Vec<u8>> {
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Invalid(format!("{what} {v} does not fit in u32")))
    };
    let (w, h, n) = (stack.width(), stack.height(), stack.len());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * w * h * n);
    out.extend_from_slice(DPF_MAGIC);
    out.extend_from_slice(&to_u32(w, "width")?.to_le_bytes());
    out.extend_from_slice(&to_u32(h, "height")?.to_le_bytes());
    out.extend_from_slice(&to_u32(n, "frame count")?.to_le_bytes());
    for frame in &stack.frames {
        for &d in &frame.depths {
            let v = if d.is_nan() { f32::NAN } else { d as f32 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes DPF1 bytes into `(width, height, frames)`.
pub fn decode_dpf(bytes: &[u8]) -> Result<(usize, usize, Vec<DepthFrame>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != DPF_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h, n) = (word(4), word(8), word(12));
    if w == 0 || h == 0 || n == 0 {
        return Err(Error::Format(format!("header declares an empty stack ({w}x{h}x{n})")));
    }
    let expected = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(n))
        .and_then(|p| p.checked_mul(4))
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "header declares {w}x{h}x{n} ({expected} bytes) but file has {} bytes",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let chunk = &payload[k * w * h * 4..(k + 1) * w * h * 4];
        let depths = chunk
            .chunks_exact(4)
            .map(|b| {
                let v = f32::from_le_bytes(b.try_into().unwrap());
                if v.is_nan() {
                    f64::NAN
                } else {
                    f64::from(v)
                }
            })
            .collect();
        let frame = DepthFrame::new(w, h, depths).map_err(|e| Error::Format(format!("frame {k}: {e}")))?;
        frames.push(frame);
    }
    Ok((w, h, frames))
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so a failure never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes the DPF1 file and its sidecar.
pub fn write_stack(stack: &FrameStack, path: &Path) -> Result<()> {
    let data = encode_dpf(stack)?;
    let meta = serde_json::to_string_pretty(&stack.meta)?;
    write_atomic(&sidecar_path(path), meta.as_bytes())?;
    write_atomic(path, &data)
}

pub fn read_meta(path: &Path) -> Result<StackMeta> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::Sidecar {
        path: side.clone(),
        reason: e.to_string(),
    })?;
    let meta: StackMeta = serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: side.clone(),
        reason: e.to_string(),
    })?;
    meta.validate().map_err(|e| Error::Sidecar {
        path: side,
        reason: e.to_string(),
    })?;
    Ok(meta)
}

/// Reads a DPF1 file and its sidecar.
pub fn read_stack(path: &Path) -> Result<FrameStack> {
    let bytes = fs::read(path)?;
    let (w, h, frames) = decode_dpf(&bytes)?;
    let meta = read_meta(path)?;
    if (w, h) != (meta.intrinsics.width, meta.intrinsics.height) {
        return Err(Error::Format(format!(
            "data is {w}x{h} but the sidecar intrinsics describe {}x{}",
            meta.intrinsics.width, meta.intrinsics.height
        )));
    }
    FrameStack::new(frames, meta)
}
