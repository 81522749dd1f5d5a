//! Ground-truth depth of a planar target.
//!
//! Camera frame: X right, Y down, Z forward. The target plane passes through
//! `(0, 0, distance)` on the optical axis and is rotated about the Y axis by
//! the incidence angle θ, so its normal is `(sin θ, 0, cos θ)`. Rendered
//! frames store Z-depth, not ray length.

use nalgebra::Vector3;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{CameraIntrinsics, DepthFrame, MAX_DEPTH};

/// Rays closer than this to parallel with the plane miss it.
const PARALLEL_EPS: f64 = 1e-12;

/// What pixels off the target see.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Background {
    /// No return (NaN).
    #[default]
    Invalid,
    /// A constant Z-depth in meters.
    Depth(f64),
}

impl Background {
    fn value(self) -> f64 {
        match self {
            Background::Invalid => f64::NAN,
            Background::Depth(d) => d,
        }
    }
}

impl Serialize for Background {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Background::Invalid => s.serialize_str("invalid"),
            Background::Depth(d) => s.serialize_f64(*d),
        }
    }
}

impl<'de> Deserialize<'de> for Background {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            Depth(f64),
        }
        match Repr::deserialize(d)? {
            Repr::Word(w) if w == "invalid" => Ok(Background::Invalid),
            Repr::Word(w) => Err(de::Error::custom(format!("unknown background {w:?}"))),
            Repr::Depth(v) => Ok(Background::Depth(v)),
        }
    }
}

/// A flat target in front of the camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarScene {
    /// Meters along the optical axis to the plane.
    pub plane_distance: f64,
    /// Degrees; rotation of the plane normal about the camera Y axis.
    pub incidence_angle: f64,
    /// Half-width and half-height of the target in meters; `None` is unbounded.
    pub plane_extent: Option<f64>,
    pub background: Background,
}

impl PlanarScene {
    /// Unbounded plane with an invalid background.
    pub fn new(plane_distance: f64, incidence_angle: f64) -> Result<Self> {
        let scene = Self {
            plane_distance,
            incidence_angle,
            plane_extent: None,
            background: Background::Invalid,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_extent(self, extent: f64) -> Result<Self> {
        let scene = Self {
            plane_extent: Some(extent),
            ..self
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_background(self, background: Background) -> Result<Self> {
        let scene = Self { background, ..self };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.plane_distance > 0.0 && self.plane_distance.is_finite()) {
            return Err(Error::Invalid(format!("plane distance {} must be positive", self.plane_distance)));
        }
        if !(0.0..75.0).contains(&self.incidence_angle) {
            return Err(Error::Invalid(format!(
                "incidence angle {}° outside [0°, 75°)",
                self.incidence_angle
            )));
        }
        if let Some(e) = self.plane_extent {
            if !(e > 0.0) {
                return Err(Error::Invalid(format!("plane extent {e} must be positive")));
            }
        }
        if let Background::Depth(d) = self.background {
            if !(d > 0.0 && d < MAX_DEPTH) {
                return Err(Error::Invalid(format!("background depth {d} outside (0, {MAX_DEPTH}) m")));
            }
        }
        Ok(())
    }

    /// Unit normal pointing away from the camera.
    pub fn normal(&self) -> Vector3<f64> {
        let t = self.incidence_angle.to_radians();
        Vector3::new(t.sin(), 0.0, t.cos())
    }

    /// Where the ray hits the target, if it does.
    pub fn intersect(&self, ray: &Vector3<f64>) -> Option<Vector3<f64>> {
        let t = self.incidence_angle.to_radians();
        let n = self.normal();
        let denom = n.dot(ray);
        if denom <= PARALLEL_EPS {
            return None;
        }
        let anchor = Vector3::new(0.0, 0.0, self.plane_distance);
        let scale = n.dot(&anchor) / denom;
        if !(scale > 0.0) {
            return None;
        }
        let p = ray * scale;
        if let Some(e) = self.plane_extent {
            let in_plane_x = Vector3::new(t.cos(), 0.0, -t.sin());
            let rel = p - anchor;
            if rel.dot(&in_plane_x).abs() > e || rel.y.abs() > e {
                return None;
            }
        }
        Some(p)
    }

    /// Z-depth of the target at pixel `(x, y)`, `None` off target.
    pub fn depth_at(&self, intrinsics: &CameraIntrinsics, x: usize, y: usize) -> Option<f64> {
        let p = self.intersect(&intrinsics.ray(x as f64, y as f64))?;
        (p.z < MAX_DEPTH).then_some(p.z)
    }

    /// Renders the clean frame. Off-target pixels, and hits beyond the
    /// depth sanity bound, get the background.
    pub fn render(&self, intrinsics: &CameraIntrinsics) -> Result<DepthFrame> {
        self.validate()?;
        intrinsics.validate()?;
        let bg = self.background.value();
        let (w, h) = (intrinsics.width, intrinsics.height);
        let depths = (0..w * h)
            .map(|i| self.depth_at(intrinsics, i % w, i / w).unwrap_or(bg))
            .collect();
        DepthFrame::new(w, h, depths)
    }

    /// Angle between the plane normal and the viewing ray of `pixel`.
    pub fn analytic_incidence(&self, intrinsics: &CameraIntrinsics, pixel: (usize, usize)) -> Result<f64> {
        let (x, y) = pixel;
        if self.depth_at(intrinsics, x, y).is_none() {
            return Err(Error::Invalid(format!("pixel ({x}, {y}) does not see the target")));
        }
        Ok(ray_incidence(&self.normal(), &intrinsics.ray(x as f64, y as f64)))
    }

    /// [`analytic_incidence`](Self::analytic_incidence) for every pixel,
    /// NaN off target.
    pub fn incidence_map(&self, intrinsics: &CameraIntrinsics) -> Vec<f64> {
        let n = self.normal();
        let w = intrinsics.width;
        (0..w * intrinsics.height)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                match self.depth_at(intrinsics, x, y) {
                    Some(_) => ray_incidence(&n, &intrinsics.ray(x as f64, y as f64)),
                    None => f64::NAN,
                }
            })
            .collect()
    }
}

/// Angle in `[0, π/2]` between a surface normal and a viewing ray,
/// independent of either vector's orientation.
pub fn ray_incidence(normal: &Vector3<f64>, ray: &Vector3<f64>) -> f64 {
    normal.cross(ray).norm().atan2(normal.dot(ray).abs())
}

pub fn render_scene(scene: &PlanarScene, intrinsics: &CameraIntrinsics) -> Result<DepthFrame> {
    scene.render(intrinsics)
}

/// Incidence angles of the default sweep, degrees.
pub const DEFAULT_ANGLES: [f64; 5] = [0.0, 15.0, 30.0, 45.0, 60.0];

/// Distances of the default sweep: 0.4 m to 2.2 m in 0.2 m steps.
pub fn default_distances() -> Vec<f64> {
    (4..=22).step_by(2).map(|k| f64::from(k) / 10.0).collect()
}

/// `(distance, angle)` pairs of the default sweep.
pub fn default_grid() -> Vec<(f64, f64)> {
    default_distances()
        .into_iter()
        .flat_map(|d| DEFAULT_ANGLES.iter().map(move |&a| (d, a)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::default_intrinsics;
    use std::f64::consts::PI;

    /// Independent ray cast: solve `((t·r) − p0)·n = 0` written out by hand.
    /// Rotation about Y leaves the row coordinate out; the ray has unit Z,
    /// so the scale is the Z-depth.
    fn ray_cast_oracle(k: &CameraIntrinsics, x: usize, dist: f64, deg: f64) -> f64 {
        let th = deg * PI / 180.0;
        let rx = (x as f64 - k.cx) / k.fx;
        dist * th.cos() / (th.sin() * rx + th.cos())
    }

    #[test]
    fn fronto_parallel_plane_is_constant() {
        let k = default_intrinsics();
        let f = PlanarScene::new(1.0, 0.0).unwrap().render(&k).unwrap();
        assert!(f.depths().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn extent_clips_to_background() {
        let k = default_intrinsics();
        let f = PlanarScene::new(1.0, 0.0).unwrap().with_extent(0.2).unwrap().render(&k).unwrap();
        assert_eq!(f.get(112, 86), 1.0);
        assert!(f.get(0, 0).is_nan());
        assert!(f.get(223, 86).is_nan());
        // 0.2 m at 1 m maps to ±fx·0.2 ≈ ±42 px around the center.
        assert_eq!(f.get(112 + 42, 86), 1.0);
        assert!(f.get(112 + 43, 86).is_nan());
    }

    #[test]
    fn tilted_plane_matches_ray_cast() {
        let k = default_intrinsics();
        let scene = PlanarScene::new(1.0, 30.0).unwrap();
        let f = scene.render(&k).unwrap();
        assert_eq!(f.get(112, 86), 1.0);
        // Plane recedes toward negative X (left).
        assert!(f.get(0, 86) > 1.0 && f.get(223, 86) < 1.0);
        for y in (0..172).step_by(7) {
            for x in 0..224 {
                let want = ray_cast_oracle(&k, x, 1.0, 30.0);
                assert!((f.get(x, y) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rendered_points_satisfy_the_plane_equation() {
        let k = default_intrinsics();
        for &(d, a) in &[(0.4, 15.0), (1.3, 45.0), (2.2, 60.0)] {
            let scene = PlanarScene::new(d, a).unwrap();
            let f = scene.render(&k).unwrap();
            let n = scene.normal();
            let off = n.dot(&Vector3::new(0.0, 0.0, d));
            for y in 0..k.height {
                for x in 0..k.width {
                    let z = f.get(x, y);
                    if z.is_nan() {
                        continue;
                    }
                    let p = k.backproject(x as f64, y as f64, z);
                    assert!((n.dot(&p) - off).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn growing_extent_keeps_on_target_pixels() {
        let k = default_intrinsics();
        let small = PlanarScene::new(1.0, 30.0).unwrap().with_extent(0.1).unwrap().render(&k).unwrap();
        let large = PlanarScene::new(1.0, 30.0).unwrap().with_extent(0.3).unwrap().render(&k).unwrap();
        for (s, l) in small.depths().iter().zip(large.depths()) {
            if !s.is_nan() {
                assert_eq!(s, l);
            }
        }
    }

    #[test]
    fn grazing_rays_fall_back_to_background() {
        let k = default_intrinsics();
        let scene = PlanarScene::new(1.0, 74.0)
            .unwrap()
            .with_background(Background::Depth(5.0))
            .unwrap();
        let f = scene.render(&k).unwrap();
        assert_eq!(f.get(0, 86), 5.0);
        assert!(f.get(223, 86) < 1.0);
    }

    #[test]
    fn incidence_at_principal_pixel_is_the_tilt() {
        let k = default_intrinsics();
        for deg in [0.0, 15.0, 60.0] {
            let th = PlanarScene::new(1.0, deg).unwrap().analytic_incidence(&k, (112, 86)).unwrap();
            assert!((th - deg * PI / 180.0).abs() < 1e-12);
        }
    }

    #[test]
    fn incidence_at_corner_is_half_diagonal_fov() {
        let k = default_intrinsics();
        let th = PlanarScene::new(1.0, 0.0).unwrap().analytic_incidence(&k, (0, 0)).unwrap();
        let (tx, ty) = (28f64.to_radians().tan(), 22f64.to_radians().tan());
        let r = [-tx, -ty, 1.0];
        let cos = 1.0 / (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        assert!((th - cos.acos()).abs() < 1e-12);
        assert!((th - (tx * tx + ty * ty).sqrt().atan()).abs() < 1e-12);
    }

    #[test]
    fn incidence_requires_target() {
        let k = default_intrinsics();
        let scene = PlanarScene::new(1.0, 0.0).unwrap().with_extent(0.1).unwrap();
        assert!(scene.analytic_incidence(&k, (0, 0)).is_err());
        assert!(scene.incidence_map(&k)[0].is_nan());
    }

    #[test]
    fn incidence_stays_below_right_angle() {
        let k = default_intrinsics();
        for deg in [0.0, 30.0, 60.0, 74.9] {
            let map = PlanarScene::new(1.0, deg).unwrap().incidence_map(&k);
            assert!(map.iter().filter(|t| !t.is_nan()).all(|&t| (0.0..PI / 2.0).contains(&t)));
        }
    }

    #[test]
    fn scene_validation() {
        assert!(PlanarScene::new(0.0, 0.0).is_err());
        assert!(PlanarScene::new(1.0, 75.0).is_err());
        assert!(PlanarScene::new(1.0, 0.0).unwrap().with_extent(0.0).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let d = default_distances();
        assert_eq!(d.len(), 10);
        assert_eq!(d[0], 0.4);
        assert_eq!(d[9], 2.2);
        assert_eq!(default_grid().len(), 50);
    }

    #[test]
    fn background_json() {
        assert_eq!(serde_json::to_string(&Background::Invalid).unwrap(), "\"invalid\"");
        assert_eq!(serde_json::from_str::<Background>("3.5").unwrap(), Background::Depth(3.5));
        assert!(serde_json::from_str::<Background>("\"wall\"").is_err());
    }

    proptest::proptest! {
        #[test]
        fn principal_pixel_sees_nominal_distance(dist in 0.1f64..7.0, deg in 0.0f64..74.9) {
            let k = default_intrinsics();
            let scene = PlanarScene::new(dist, deg).unwrap();
            let z = scene.depth_at(&k, 112, 86).unwrap();
            proptest::prop_assert!((z - dist).abs() < 1e-9 * dist);
            let t = scene.analytic_incidence(&k, (112, 86)).unwrap();
            proptest::prop_assert!((t.to_degrees() - deg).abs() < 1e-9);
        }

        #[test]
        fn rendered_depths_are_valid_or_background(dist in 0.2f64..3.0, deg in 0.0f64..74.0, extent in 0.05f64..1.0) {
            let k = CameraIntrinsics::new(40, 30, 40.0, 40.0, 20.0, 15.0).unwrap();
            let frame = PlanarScene::new(dist, deg).unwrap().with_extent(extent).unwrap().render(&k).unwrap();
            proptest::prop_assert!(frame.depths().iter().all(|&d| d.is_nan() || (d > 0.0 && d < MAX_DEPTH)));
            proptest::prop_assert!(frame.is_valid(20, 15));
        }
    }
}
