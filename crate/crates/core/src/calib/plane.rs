use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::frame::{CameraIntrinsics, DepthFrame, FrameStack, PixelRect};
use crate::scene::ray_incidence;

use super::stats::temporal_mean;

/// Total-least-squares plane `normal · p = offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneFit {
    /// Unit normal, oriented away from the camera.
    pub normal: Vector3<f64>,
    /// Meters.
    pub offset: f64,
    /// Orthogonal RMS distance of the points to the plane, meters.
    pub rms_residual: f64,
    pub inlier_count: usize,
}

impl PlaneFit {
    /// Z-depth where the viewing ray of pixel `(x, y)` meets the plane.
    pub fn depth_at(&self, intrinsics: &CameraIntrinsics, x: usize, y: usize) -> Option<f64> {
        let ray = intrinsics.ray(x as f64, y as f64);
        let denom = self.normal.dot(&ray);
        let z = self.offset / denom;
        (denom.abs() > 1e-12 && z > 0.0).then_some(z)
    }

    /// Angle between the plane normal and the viewing ray of pixel `(x, y)`.
    pub fn incidence_at(&self, intrinsics: &CameraIntrinsics, x: usize, y: usize) -> f64 {
        ray_incidence(&self.normal, &intrinsics.ray(x as f64, y as f64))
    }
}

/// Fits a plane to a point cloud by PCA: the normal is the eigenvector of the
/// smallest eigenvalue of the centered scatter matrix.
pub fn fit_plane_points(points: &[Vector3<f64>]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("{} points cannot define a plane", points.len())));
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let q = p - centroid;
        acc + q * q.transpose()
    }) / n;
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let (lo, mid, hi) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }
    debug_assert!(lo <= mid);
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if normal.dot(&centroid) < 0.0 {
        normal = -normal;
    }
    let offset = normal.dot(&centroid);
    let ss: f64 = points.iter().map(|p| (normal.dot(p) - offset).powi(2)).sum();
    Ok(PlaneFit {
        normal,
        offset,
        rms_residual: (ss / n).sqrt(),
        inlier_count: points.len(),
    })
}

/// Plane through the re-projected valid pixels of `frame` inside `roi`.
pub fn fit_plane_frame(frame: &DepthFrame, intrinsics: &CameraIntrinsics, roi: &PixelRect) -> Result<PlaneFit> {
    let points: Vec<_> = roi
        .pixels()
        .filter(|&(x, y)| x < frame.width() && y < frame.height() && frame.is_valid(x, y))
        .map(|(x, y)| intrinsics.backproject(x as f64, y as f64, frame.get(x, y)))
        .collect();
    fit_plane_points(&points)
}

/// Plane through the temporal-mean frame of the stack inside `roi`.
pub fn fit_plane(stack: &FrameStack, roi: &PixelRect) -> Result<PlaneFit> {
    fit_plane_frame(&temporal_mean(stack), stack.intrinsics(), roi)
}
