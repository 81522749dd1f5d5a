//! Axial and lateral noise models.
//!
//! Axial noise is a zero-mean Gaussian ranging error whose standard deviation
//! depends on depth `z` (meters) and incidence angle `θ` (radians):
//!
//! ```text
//! σ_z(z, θ) = a + b·z + c·z² + d·zⁿ · θ² / (π/2 − θ)²
//! ```
//!
//! Lateral noise is a zero-mean Gaussian jitter of edge positions with a
//! per-mode standard deviation `σ_x` in pixels, independent of `z` and `θ`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to evaluated `σ_z`, in meters.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Largest incidence angle the axial model accepts (75°), in radians.
pub const THETA_MAX: f64 = 75.0 * std::f64::consts::PI / 180.0;

/// Camera operating modes (modulation scheme and frame rate).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeId {
    #[serde(rename = "Mode_5_15fps")]
    Mode5At15Fps,
    #[serde(rename = "Mode_5_30fps")]
    Mode5At30Fps,
    #[serde(rename = "Mode_5_60fps")]
    Mode5At60Fps,
    #[serde(rename = "Mode_9_15fps")]
    Mode9At15Fps,
    #[serde(rename = "Mode_9_20fps")]
    Mode9At20Fps,
    #[serde(rename = "Mode_9_30fps")]
    Mode9At30Fps,
}

impl ModeId {
    pub const ALL: [ModeId; 6] = [
        ModeId::Mode5At15Fps,
        ModeId::Mode5At30Fps,
        ModeId::Mode5At60Fps,
        ModeId::Mode9At15Fps,
        ModeId::Mode9At20Fps,
        ModeId::Mode9At30Fps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModeId::Mode5At15Fps => "Mode_5_15fps",
            ModeId::Mode5At30Fps => "Mode_5_30fps",
            ModeId::Mode5At60Fps => "Mode_5_60fps",
            ModeId::Mode9At15Fps => "Mode_9_15fps",
            ModeId::Mode9At20Fps => "Mode_9_20fps",
            ModeId::Mode9At30Fps => "Mode_9_30fps",
        }
    }

    /// Frame rate in Hz.
    pub fn frame_rate(self) -> f64 {
        match self {
            ModeId::Mode5At15Fps | ModeId::Mode9At15Fps => 15.0,
            ModeId::Mode9At20Fps => 20.0,
            ModeId::Mode5At30Fps | ModeId::Mode9At30Fps => 30.0,
            ModeId::Mode5At60Fps => 60.0,
        }
    }

    /// Measurement range `(min, max)` in meters.
    pub fn range(self) -> (f64, f64) {
        match self {
            ModeId::Mode5At15Fps | ModeId::Mode5At30Fps | ModeId::Mode5At60Fps => (0.1, 2.4),
            ModeId::Mode9At15Fps | ModeId::Mode9At20Fps | ModeId::Mode9At30Fps => (0.1, 7.0),
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModeId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown mode id {s:?}")))
    }
}

/// How lateral jitter is applied to the two image axes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralMode {
    /// `σ_x` on both image axes.
    #[default]
    Isotropic,
    /// `σ_x` on the horizontal axis only.
    XOnly,
    Off,
}

impl FromStr for LateralMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iso" | "isotropic" => Ok(LateralMode::Isotropic),
            "x" | "x_only" => Ok(LateralMode::XOnly),
            "off" => Ok(LateralMode::Off),
            _ => Err(Error::Invalid(format!("unknown lateral mode {s:?}"))),
        }
    }
}

/// Fitted parameters of the axial model plus the lateral `σ_x` for one mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModelCoefficients {
    pub mode_id: ModeId,
    /// Constant term, m.
    pub a: f64,
    /// Linear term, m/m.
    pub b: f64,
    /// Quadratic term, m/m².
    pub c: f64,
    /// Incidence term scale, m/mⁿ.
    pub d: f64,
    /// Exponent on depth in the incidence term.
    pub n: f64,
    /// Lateral standard deviation, pixels.
    pub sigma_x: f64,
}

/// The angular factor `θ² / (π/2 − θ)²`.
#[inline]
pub fn incidence_factor(theta: f64) -> f64 {
    let r = theta / (FRAC_PI_2 - theta);
    r * r
}

impl NoiseModelCoefficients {
    pub fn new(mode_id: ModeId, a: f64, b: f64, c: f64, d: f64, n: f64, sigma_x: f64) -> Result<Self> {
        let coeffs = Self {
            mode_id,
            a,
            b,
            c,
            d,
            n,
            sigma_x,
        };
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("n", self.n),
            ("sigma_x", self.sigma_x),
        ] {
            if !v.is_finite() {
                return Err(Error::Invalid(format!("coefficient {name} is not finite")));
            }
        }
        if self.sigma_x < 0.0 {
            return Err(Error::Invalid(format!("sigma_x = {} is negative", self.sigma_x)));
        }
        Ok(())
    }

    /// Unclamped model value; the caller is responsible for the domain.
    #[inline]
    pub fn raw_axial_sigma(&self, z: f64, theta: f64) -> f64 {
        self.a + self.b * z + self.c * z * z + self.d * z.powf(self.n) * incidence_factor(theta)
    }

    /// Axial standard deviation in meters, floored at [`SIGMA_FLOOR`].
    pub fn axial_sigma(&self, z: f64, theta: f64) -> Result<f64> {
        self.axial_sigma_with_floor(z, theta, SIGMA_FLOOR)
    }

    /// As [`axial_sigma`](Self::axial_sigma) with an explicit floor; a floor
    /// of zero disables clamping except at zero itself.
    pub fn axial_sigma_with_floor(&self, z: f64, theta: f64, floor: f64) -> Result<f64> {
        check_axial_domain(z, theta, self.n)?;
        Ok(self.raw_axial_sigma(z, theta).max(floor))
    }

    /// One axial noise draw, N(0, σ_z²), in meters.
    pub fn sample_axial<R: Rng + ?Sized>(&self, z: f64, theta: f64, rng: &mut R) -> Result<f64> {
        self.sample_axial_with_floor(z, theta, SIGMA_FLOOR, rng)
    }

    pub fn sample_axial_with_floor<R: Rng + ?Sized>(
        &self,
        z: f64,
        theta: f64,
        floor: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let sigma = self.axial_sigma_with_floor(z, theta, floor)?;
        let unit: f64 = StandardNormal.sample(rng);
        Ok(sigma * unit)
    }

    /// One lateral offset `(dx, dy)` in pixels.
    pub fn sample_lateral_offset<R: Rng + ?Sized>(&self, mode: LateralMode, rng: &mut R) -> (f64, f64) {
        let s = self.sigma_x;
        match mode {
            LateralMode::Off => (0.0, 0.0),
            _ if s == 0.0 => (0.0, 0.0),
            LateralMode::XOnly => {
                let dx: f64 = StandardNormal.sample(rng);
                (s * dx, 0.0)
            }
            LateralMode::Isotropic => {
                let dx: f64 = StandardNormal.sample(rng);
                let dy: f64 = StandardNormal.sample(rng);
                (s * dx, s * dy)
            }
        }
    }

    /// Serializes to the coefficient JSON document. Every number is written
    /// as a decimal literal with at least nine significant digits.
    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::from("{\n");
        out.push_str(&format!("  \"mode_id\": \"{}\",\n", self.mode_id));
        let fields = [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("n", self.n),
            ("sigma_x", self.sigma_x),
        ];
        for (i, (key, v)) in fields.iter().enumerate() {
            let sep = if i + 1 == fields.len() { "" } else { "," };
            out.push_str(&format!("  \"{key}\": {}{sep}\n", decimal_literal(*v, 9)));
        }
        out.push_str("}\n");
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let coeffs: Self = serde_json::from_str(text)?;
        coeffs.validate()?;
        Ok(coeffs)
    }
}

fn check_axial_domain(z: f64, theta: f64, n: f64) -> Result<()> {
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::Domain(format!("depth z = {z} must be finite and non-negative")));
    }
    if !(theta.is_finite() && (0.0..=THETA_MAX).contains(&theta)) {
        return Err(Error::Domain(format!(
            "incidence angle {:.4}° outside [0°, 75°]",
            theta.to_degrees()
        )));
    }
    if z == 0.0 && n < 0.0 {
        return Err(Error::Domain(format!("z^n undefined at z = 0 for n = {n}")));
    }
    Ok(())
}

/// Formats `x` as a plain decimal (no exponent) that parses back to the same
/// `f64`, padded with trailing zeros up to `min_sig` significant digits.
pub(crate) fn decimal_literal(x: f64, min_sig: usize) -> String {
    let mut s = format!("{x}");
    let sig = s
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    if sig < min_sig {
        if !s.contains('.') {
            s.push('.');
        }
        let pad = if sig == 0 { min_sig } else { min_sig - sig };
        s.extend(std::iter::repeat_n('0', pad));
    }
    s
}

/// KL divergence KL(N(μ₁, σ₁²) ‖ N(μ₂, σ₂²)) in nats.
pub fn gaussian_kl(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<f64> {
    if !(sigma1 > 0.0 && sigma2 > 0.0 && sigma1.is_finite() && sigma2.is_finite()) {
        return Err(Error::Domain(format!(
            "KL needs positive finite sigmas, got {sigma1} and {sigma2}"
        )));
    }
    if !(mu1.is_finite() && mu2.is_finite()) {
        return Err(Error::Domain("KL needs finite means".into()));
    }
    let shift = mu1 - mu2;
    let kl = (sigma2 / sigma1).ln() + (sigma1 * sigma1 + shift * shift) / (2.0 * sigma2 * sigma2) - 0.5;
    // Rounding can leave a tiny negative residue for near-identical inputs.
    Ok(kl.max(0.0))
}

/// Per-mode calibration shipped with the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModePreset {
    pub mode_id: ModeId,
    /// Hz.
    pub frame_rate: f64,
    /// Meters.
    pub range_min: f64,
    /// Meters.
    pub range_max: f64,
    pub coefficients: NoiseModelCoefficients,
}

impl ModePreset {
    /// Builds a preset for a mode and checks that `σ_z` stays above the
    /// floor across the mode's range for every angle up to 75°.
    ///
    /// # Panics
    ///
    /// If the coefficients dip below [`SIGMA_FLOOR`] on that grid.
    pub fn new(coefficients: NoiseModelCoefficients) -> Self {
        let mode_id = coefficients.mode_id;
        let (range_min, range_max) = mode_id.range();
        assert!(range_min < range_max);
        for i in 0..=200 {
            let z = range_min + (range_max - range_min) * f64::from(i) / 200.0;
            for deg in 0..=75 {
                let theta = (f64::from(deg) * std::f64::consts::PI / 180.0).min(THETA_MAX);
                let s = coefficients.raw_axial_sigma(z, theta);
                assert!(
                    s >= SIGMA_FLOOR,
                    "{mode_id}: sigma_z({z}, {deg}°) = {s} below the floor"
                );
            }
        }
        Self {
            mode_id,
            frame_rate: mode_id.frame_rate(),
            range_min,
            range_max,
            coefficients,
        }
    }

    /// The three fitted modes.
    pub fn all() -> [ModePreset; 3] {
        [
            Self::new(preset_coefficients(ModeId::Mode5At30Fps).unwrap()),
            Self::new(preset_coefficients(ModeId::Mode5At60Fps).unwrap()),
            Self::new(preset_coefficients(ModeId::Mode9At30Fps).unwrap()),
        ]
    }

    pub fn for_mode(mode: ModeId) -> Option<ModePreset> {
        preset_coefficients(mode).map(Self::new)
    }
}

/// Published coefficients for the fitted modes; `None` for the others.
pub fn preset_coefficients(mode: ModeId) -> Option<NoiseModelCoefficients> {
    let (a, b, c, d, n, sigma_x) = match mode {
        ModeId::Mode5At30Fps => (0.002362, -0.001041, 0.000753, 0.000185, 2.7, 0.864),
        ModeId::Mode5At60Fps => (0.002209, -0.000793, 0.001418, 0.000370, 2.7, 1.098),
        ModeId::Mode9At30Fps => (0.002345, -0.002101, 0.001824, 0.000298, 2.7, 1.649),
        _ => return None,
    };
    Some(NoiseModelCoefficients {
        mode_id: mode,
        a,
        b,
        c,
        d,
        n,
        sigma_x,
    })
}
