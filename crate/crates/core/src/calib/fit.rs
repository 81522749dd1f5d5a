use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{incidence_factor, ModeId, NoiseModelCoefficients, THETA_MAX};

use super::axial::AxialSample;

/// Fewest samples accepted by [`fit_axial_model`].
pub const MIN_SAMPLES: usize = 5;
const ANGLE_TOLERANCE: f64 = 1e-3;
const DISTANCE_TOLERANCE: f64 = 1e-3;
const RANK_TOLERANCE: f64 = 1e-13;

/// Candidate exponents `min, min + step, ..., max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for ExponentGrid {
    fn default() -> Self {
        Self {
            min: -1.0,
            max: 3.0,
            step: 0.1,
        }
    }
}

impl ExponentGrid {
    /// Grid members. When `1 / step` is an integer the values are formed as
    /// `k / (1 / step)` so that decimal members such as 2.7 come out as the
    /// nearest `f64` rather than an accumulated sum.
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.min.is_finite() && self.max.is_finite() && self.max >= self.min) {
            return Err(Error::Invalid(format!(
                "exponent grid [{}, {}] step {} is malformed",
                self.min, self.max, self.step
            )));
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as i64;
        if count > 100_000 {
            return Err(Error::Invalid(format!("exponent grid has {count} members")));
        }
        let inv = 1.0 / self.step;
        let values = if (inv - inv.round()).abs() < 1e-9 && (self.min * inv - (self.min * inv).round()).abs() < 1e-6 {
            let (inv, m0) = (inv.round(), (self.min * inv).round() as i64);
            (0..=count).map(|k| (m0 + k) as f64 / inv).collect()
        } else {
            (0..=count).map(|k| self.min + k as f64 * self.step).collect()
        };
        Ok(values)
    }
}

/// What one least-squares row stands for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// One row per capture condition: the measured mean of the per-pixel
    /// stds against the footprint-averaged model.
    #[default]
    Condition,
    /// One row per ROI pixel.
    Pixel,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "condition" => Ok(Aggregation::Condition),
            "pixel" => Ok(Aggregation::Pixel),
            other => Err(Error::Invalid(format!("unknown aggregation {other:?}"))),
        }
    }
}

/// Mean squared error of the best `(a, b, c, d)` for one exponent. `None`
/// when the design is rank-deficient at that exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub n: f64,
    pub mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxialFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub n: f64,
    pub mse: f64,
    pub scores: Vec<GridScore>,
    pub aggregation: Aggregation,
}

impl AxialFit {
    pub fn coefficients(&self, mode_id: ModeId, sigma_x: f64) -> Result<NoiseModelCoefficients> {
        NoiseModelCoefficients::new(mode_id, self.a, self.b, self.c, self.d, self.n, sigma_x)
    }
}

struct Row {
    z: Vec<f64>,
    theta: Vec<f64>,
    target: f64,
}

impl Row {
    fn design(&self, n: f64) -> Vector4<f64> {
        let mut acc = Vector4::zeros();
        for (&z, &theta) in self.z.iter().zip(&self.theta) {
            acc += Vector4::new(1.0, z, z * z, z.powf(n) * incidence_factor(theta.min(THETA_MAX)));
        }
        acc / self.z.len() as f64
    }
}

fn rows(samples: &[AxialSample], aggregation: Aggregation) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for s in samples {
        if !(s.z > 0.0 && s.z.is_finite() && s.theta.is_finite() && s.sigma_measured.is_finite()) {
            return Err(Error::Invalid(format!("sample at z = {} θ = {} is not usable", s.z, s.theta)));
        }
        match aggregation {
            Aggregation::Condition if s.pixels.is_empty() => rows.push(Row {
                z: vec![s.z],
                theta: vec![s.theta],
                target: s.sigma_measured,
            }),
            Aggregation::Condition => rows.push(Row {
                z: s.pixels.iter().map(|p| p.z).collect(),
                theta: s.pixels.iter().map(|p| p.theta).collect(),
                target: s.sigma_measured,
            }),
            Aggregation::Pixel if s.pixels.is_empty() => {
                return Err(Error::InsufficientData(
                    "per-pixel fitting needs samples with pixel detail".into(),
                ))
            }
            Aggregation::Pixel => rows.extend(s.pixels.iter().map(|p| Row {
                z: vec![p.z],
                theta: vec![p.theta],
                target: p.sigma,
            })),
        }
    }
    Ok(rows)
}

fn distinct(values: impl Iterator<Item = f64>, tolerance: f64) -> usize {
    let mut sorted: Vec<f64> = values.collect();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).filter(|w| w[1] - w[0] > tolerance).count() + usize::from(!sorted.is_empty())
}

/// Least squares in `(a, b, c, d)` at fixed `n`; `None` if rank-deficient.
fn solve(rows: &[Row], n: f64) -> Option<(Vector4<f64>, f64)> {
    let designs: Vec<Vector4<f64>> = rows.iter().map(|r| r.design(n)).collect();
    if designs.iter().any(|x| !x.iter().all(|v| v.is_finite())) {
        return None;
    }
    let mut ata = Matrix4::zeros();
    let mut aty = Vector4::zeros();
    for (x, r) in designs.iter().zip(rows) {
        ata += x * x.transpose();
        aty += x * r.target;
    }
    let scale = ata.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    if scale.iter().any(|&s| s == 0.0) {
        return None;
    }
    let d = Matrix4::from_diagonal(&scale);
    let m = d * ata * d;
    let eig = SymmetricEigen::new(m);
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > RANK_TOLERANCE * hi) {
        return None;
    }
    let y = m.cholesky()?.solve(&(d * aty));
    let beta = d * y;
    let sse: f64 = designs
        .iter()
        .zip(rows)
        .map(|(x, r)| (x.dot(&beta) - r.target).powi(2))
        .sum();
    Some((beta, sse / rows.len() as f64))
}

/// Grid search over `n` with a linear solve for `(a, b, c, d)` at each
/// member. Returns the minimum-MSE member; ties go to the smaller `n`.
pub fn fit_axial_model(samples: &[AxialSample], grid: &ExponentGrid, aggregation: Aggregation) -> Result<AxialFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least {MIN_SAMPLES}",
            samples.len()
        )));
    }
    let angles = distinct(samples.iter().map(|s| s.theta), ANGLE_TOLERANCE);
    if angles < 2 {
        return Err(Error::RankDeficient(
            "all samples share one incidence angle; the angular term is unidentifiable".into(),
        ));
    }
    let distances = distinct(samples.iter().map(|s| s.z), DISTANCE_TOLERANCE);
    if distances < 3 {
        return Err(Error::RankDeficient(format!(
            "{distances} distinct distances; the quadratic in z needs at least 3"
        )));
    }
    let rows = rows(samples, aggregation)?;
    let mut scores = Vec::new();
    let mut best: Option<(f64, Vector4<f64>, f64)> = None;
    for n in grid.values()? {
        let solved = solve(&rows, n);
        scores.push(GridScore {
            n,
            mse: solved.map(|(_, mse)| mse),
        });
        if let Some((beta, mse)) = solved {
            if best.is_none_or(|(_, _, m)| mse < m) {
                best = Some((n, beta, mse));
            }
        }
    }
    let (n, beta, mse) =
        best.ok_or_else(|| Error::RankDeficient("design is rank-deficient at every grid exponent".into()))?;
    Ok(AxialFit {
        a: beta[0],
        b: beta[1],
        c: beta[2],
        d: beta[3],
        n,
        mse,
        scores,
        aggregation,
    })
}
