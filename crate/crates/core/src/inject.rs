//! Simulated capture: clean depth in, noisy depth out.
//!
//! Injection runs in two stages. The lateral stage resamples the clean frame
//! at jittered source coordinates (nearest neighbor, clamped to the frame).
//! The axial stage then adds a Gaussian ranging error with standard deviation
//! `σ_z(z, θ)` to every valid pixel, where `z` is the resampled depth and `θ`
//! is the incidence angle at the source pixel.
//!
//! Horizontal jitter is drawn once per image row and vertical jitter once per
//! image column. Each pixel's offset is still N(0, σ_x²) per axis, and a
//! vertical edge moves by the same amount along a whole row, so the edge
//! position spread equals `σ_x`.
//!
//! All randomness comes from [`CounterRng`] streams keyed by seed, frame
//! index and pixel/row/column index; output does not depend on thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{CameraIntrinsics, DepthFrame, FrameStack, StackMeta, MAX_DEPTH};
use crate::model::{LateralMode, NoiseModelCoefficients, SIGMA_FLOOR, THETA_MAX};
use crate::rng::{CounterRng, Stream};
use crate::scene::{ray_incidence, PlanarScene};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AxialMode {
    #[default]
    On,
    Off,
}

/// Where per-pixel incidence angles come from.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum AngleSource {
    /// Exact angles from the scene that produced the frame.
    Analytic(PlanarScene),
    /// Normals estimated from the clean frame itself.
    #[default]
    EstimatedNormals,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InjectionConfig {
    pub coefficients: NoiseModelCoefficients,
    pub seed: u64,
    pub lateral: LateralMode,
    pub axial: AxialMode,
    pub angle_source: AngleSource,
    /// Angle used where no incidence estimate exists, radians.
    pub theta_fallback: f64,
    /// Floor on `σ_z`, meters.
    pub sigma_floor: f64,
}

impl InjectionConfig {
    /// Axial and isotropic lateral noise, estimated angles, θ fallback 0.
    pub fn new(coefficients: NoiseModelCoefficients, seed: u64) -> Self {
        Self {
            coefficients,
            seed,
            lateral: LateralMode::Isotropic,
            axial: AxialMode::On,
            angle_source: AngleSource::EstimatedNormals,
            theta_fallback: 0.0,
            sigma_floor: SIGMA_FLOOR,
        }
    }

    pub fn lateral(self, lateral: LateralMode) -> Self {
        Self { lateral, ..self }
    }

    pub fn axial(self, axial: AxialMode) -> Self {
        Self { axial, ..self }
    }

    pub fn angles(self, angle_source: AngleSource) -> Self {
        Self { angle_source, ..self }
    }

    pub fn theta_fallback(self, theta_fallback: f64) -> Self {
        Self { theta_fallback, ..self }
    }

    /// True when neither noise stage does anything.
    pub fn is_noop(&self) -> bool {
        self.axial == AxialMode::Off && (self.lateral == LateralMode::Off || self.coefficients.sigma_x == 0.0)
    }

    fn validate(&self) -> Result<()> {
        self.coefficients.validate()?;
        if !(0.0..=THETA_MAX).contains(&self.theta_fallback) {
            return Err(Error::Invalid(format!(
                "theta fallback {}° outside [0°, 75°]",
                self.theta_fallback.to_degrees()
            )));
        }
        if !(self.sigma_floor >= 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::Invalid("sigma floor must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-pixel incidence angle from central-difference normals of the
/// re-projected point cloud, clamped to [0, 75°]. NaN where the 4-neighbour
/// stencil leaves the frame or touches an invalid pixel.
pub fn estimate_incidence_map(frame: &DepthFrame, intrinsics: &CameraIntrinsics) -> Vec<f64> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = vec![f64::NAN; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    let point = |x: usize, y: usize| intrinsics.backproject(x as f64, y as f64, frame.get(x, y));
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        if y == 0 || y + 1 == h {
            return;
        }
        for (x, cell) in row.iter_mut().enumerate().take(w - 1).skip(1) {
            let stencil = [(x, y), (x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
            if stencil.iter().any(|&(sx, sy)| !frame.is_valid(sx, sy)) {
                continue;
            }
            let tx = point(x + 1, y) - point(x - 1, y);
            let ty = point(x, y + 1) - point(x, y - 1);
            let normal = tx.cross(&ty);
            if normal.norm() == 0.0 {
                continue;
            }
            let theta = ray_incidence(&normal, &point(x, y));
            *cell = theta.clamp(0.0, THETA_MAX);
        }
    });
    out
}

/// Reusable injector for one clean frame; precomputes the angle map so a
/// stack of frames shares it.
#[derive(Clone, Debug)]
pub struct Injector<'a> {
    clean: &'a DepthFrame,
    config: InjectionConfig,
    angles: Vec<f64>,
}

impl<'a> Injector<'a> {
    pub fn new(clean: &'a DepthFrame, intrinsics: &CameraIntrinsics, config: InjectionConfig) -> Result<Self> {
        config.validate()?;
        if (clean.width(), clean.height()) != (intrinsics.width, intrinsics.height) {
            return Err(Error::Invalid("frame and intrinsics disagree on resolution".into()));
        }
        let angles = if config.axial == AxialMode::Off {
            Vec::new()
        } else {
            let raw = match &config.angle_source {
                AngleSource::Analytic(scene) => scene.incidence_map(intrinsics),
                AngleSource::EstimatedNormals => estimate_incidence_map(clean, intrinsics),
            };
            raw.into_iter()
                .map(|t| if t.is_nan() { config.theta_fallback } else { t.clamp(0.0, THETA_MAX) })
                .collect()
        };
        Ok(Self { clean, config, angles })
    }

    /// Per-row horizontal and per-column vertical offsets for one frame.
    fn lateral_field(&self, frame_index: u64) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.clean.width(), self.clean.height());
        let sigma = self.config.coefficients.sigma_x;
        let draw = |stream, i: usize| sigma * CounterRng::new(self.config.seed, stream, frame_index, i as u64).standard_normal();
        match self.config.lateral {
            LateralMode::Off => (vec![0.0; h], vec![0.0; w]),
            LateralMode::XOnly => ((0..h).map(|y| draw(Stream::LateralX, y)).collect(), vec![0.0; w]),
            LateralMode::Isotropic => (
                (0..h).map(|y| draw(Stream::LateralX, y)).collect(),
                (0..w).map(|x| draw(Stream::LateralY, x)).collect(),
            ),
        }
    }

    /// Noisy version of the clean frame for `frame_index`.
    pub fn frame(&self, frame_index: u64) -> Result<DepthFrame> {
        if self.config.is_noop() {
            return Ok(self.clean.clone());
        }
        let (w, h) = (self.clean.width(), self.clean.height());
        let (row_dx, col_dy) = self.lateral_field(frame_index);
        let lateral_on = self.config.lateral != LateralMode::Off;
        let axial_on = self.config.axial == AxialMode::On;
        let coeffs = &self.config.coefficients;
        let clean = self.clean.depths();

        let source_index = |x: usize, y: usize| -> usize {
            if !lateral_on {
                return y * w + x;
            }
            let sx = (x as f64 + row_dx[y]).round().clamp(0.0, (w - 1) as f64) as usize;
            let sy = (y as f64 + col_dy[x]).round().clamp(0.0, (h - 1) as f64) as usize;
            sy * w + sx
        };

        let mut out = vec![f64::NAN; w * h];
        let rows: Vec<Result<()>> = out
            .par_chunks_mut(w)
            .enumerate()
            .map(|(y, row)| {
                for (x, slot) in row.iter_mut().enumerate() {
                    let src = source_index(x, y);
                    let z = clean[src];
                    if z.is_nan() || !axial_on {
                        *slot = z;
                        continue;
                    }
                    let theta = self.angles[src];
                    let sigma = coeffs
                        .axial_sigma_with_floor(z, theta, self.config.sigma_floor)
                        .map_err(|e| e.at_pixel(x, y))?;
                    let mut rng = CounterRng::new(self.config.seed, Stream::Axial, frame_index, (y * w + x) as u64);
                    let noisy = z + sigma * rng.standard_normal();
                    // A draw that leaves the sensor's plausible range becomes a dropout.
                    *slot = if noisy > 0.0 && noisy < MAX_DEPTH { noisy } else { f64::NAN };
                }
                Ok(())
            })
            .collect();
        rows.into_iter().collect::<Result<()>>()?;
        Ok(DepthFrame::from_parts(w, h, out))
    }
}

/// Injects noise into a single frame (frame index 0).
pub fn inject(frame: &DepthFrame, intrinsics: &CameraIntrinsics, config: &InjectionConfig) -> Result<DepthFrame> {
    Injector::new(frame, intrinsics, *config)?.frame(0)
}

/// `count` independent noisy copies of one clean frame; frame `i` uses the
/// streams of frame index `i`.
pub fn inject_stack(clean: &DepthFrame, count: usize, meta: StackMeta, config: &InjectionConfig) -> Result<FrameStack> {
    if count == 0 {
        return Err(Error::Invalid("inject_stack needs count >= 1".into()));
    }
    let injector = Injector::new(clean, &meta.intrinsics, *config)?;
    let frames = (0..count as u64)
        .map(|i| injector.frame(i))
        .collect::<Result<Vec<_>>>()?;
    FrameStack::new(frames, meta)
}

/// Injects noise into every frame of an existing stack, frame `i` using the
/// streams of frame index `i`.
pub fn inject_each(stack: &FrameStack, config: &InjectionConfig) -> Result<FrameStack> {
    let intrinsics = *stack.intrinsics();
    let frames = stack
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| Injector::new(f, &intrinsics, *config)?.frame(i as u64))
        .collect::<Result<Vec<_>>>()?;
    FrameStack::new(frames, *stack.meta())
}
