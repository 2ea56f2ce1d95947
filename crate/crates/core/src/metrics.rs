//! Evaluation metrics: top-view IoU and rotation/focal errors.
//!
//! The IoU compares the ground footprints of two cameras. A footprint is the
//! part of the image rectangle that maps onto the field plane in front of
//! the camera, restricted to the field enlarged by [`FOOTPRINT_MARGIN`].

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraBase, PtzCamera, PtzParams};
use crate::field::FieldModel;
use crate::geometry::{area, clip_half_plane, convex_intersection_area};

/// Margin around the field used to bound footprints (meters).
pub const FOOTPRINT_MARGIN: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("camera has a degenerate field homography")]
    DegenerateHomography,
    #[error("neither camera sees any part of the field region")]
    EmptyFootprints,
}

/// Axis-aligned footprint bounds `(x_min, x_max, y_min, y_max)`.
pub fn footprint_bounds(field: &FieldModel) -> (f64, f64, f64, f64) {
    (
        -FOOTPRINT_MARGIN,
        field.length + FOOTPRINT_MARGIN,
        -FOOTPRINT_MARGIN,
        field.width + FOOTPRINT_MARGIN,
    )
}

/// Ground footprint of the camera image as a convex polygon on the field
/// plane; empty if nothing of the bounded field region is visible.
pub fn footprint(cam: &PtzCamera, field: &FieldModel) -> Result<Vec<Vector2<f64>>, MetricError> {
    let h = cam
        .field_to_image_homography()
        .map_err(|_| MetricError::DegenerateHomography)?;
    let h_inv = h.try_inverse().ok_or(MetricError::DegenerateHomography)?;
    // Every constraint is linear in the pixel: row . (x, y, 1) >= 0.
    let rows = |m: &Matrix3<f64>, i: usize| Vector3::new(m[(i, 0)], m[(i, 1)], m[(i, 2)]);
    let (qx, qy, qw) = (rows(&h_inv, 0), rows(&h_inv, 1), rows(&h_inv, 2));
    let (x0, x1, y0, y1) = footprint_bounds(field);
    let eps = 1e-12 * qw.norm();
    let constraints = [
        qw - Vector3::new(0.0, 0.0, eps),
        qx - qw * x0,
        qw * x1 - qx,
        qy - qw * y0,
        qw * y1 - qy,
    ];
    let mut poly: Vec<Vector2<f64>> = cam.base.image_size().corners().to_vec();
    for c in &constraints {
        poly = clip_half_plane(&poly, c);
        if poly.is_empty() {
            return Ok(Vec::new());
        }
    }
    let ground: Vec<Vector2<f64>> = poly
        .iter()
        .map(|p| {
            let q = h_inv * Vector3::new(p.x, p.y, 1.0);
            Vector2::new(q.x / q.z, q.y / q.z)
        })
        .collect();
    if ground.len() < 3 || area(&ground) <= 0.0 {
        return Ok(Vec::new());
    }
    Ok(ground)
}

/// Intersection over union of two ground footprints.
pub fn compute_iou(gt: &PtzCamera, est: &PtzCamera, field: &FieldModel) -> Result<f64, MetricError> {
    let a = footprint(gt, field)?;
    let b = footprint(est, field)?;
    let (aa, ab) = (area(&a), area(&b));
    if aa == 0.0 && ab == 0.0 {
        return Err(MetricError::EmptyFootprints);
    }
    let inter = if aa > 0.0 && ab > 0.0 {
        convex_intersection_area(&a, &b)
    } else {
        0.0
    };
    let union = aa + ab - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Full camera rotation `Q_tilt Q_pan S`.
pub fn camera_rotation(ptz: &PtzParams, base: &CameraBase) -> Matrix3<f64> {
    ptz.rotation() * base.rotation()
}

/// Angle of the rotation matrix `r` in degrees.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let v = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin = 0.5 * v.norm();
    let cos = 0.5 * (r.trace() - 1.0);
    sin.atan2(cos).to_degrees()
}

/// Angle of `R_gt^T R_est` in degrees and `|f_gt - f_est|` in pixels.
pub fn rotation_focal_error(gt: &PtzParams, est: &PtzParams, base: &CameraBase) -> (f64, f64) {
    let r = camera_rotation(gt, base).transpose() * camera_rotation(est, base);
    (rotation_angle(&r), (gt.focal_length - est.focal_length).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub iou: f64,
    pub pan_error: f64,
    pub tilt_error: f64,
    pub rotation_error: f64,
    pub focal_error: f64,
}

/// All metrics of an estimate against the ground-truth camera.
pub fn evaluate(gt: &PtzCamera, est: &PtzParams, field: &FieldModel) -> Result<EvalResult, MetricError> {
    let est_cam = PtzCamera::new(gt.base.clone(), *est);
    let iou = compute_iou(gt, &est_cam, field)?;
    let (rotation_error, focal_error) = rotation_focal_error(&gt.ptz, est, &gt.base);
    Ok(EvalResult {
        iou,
        pan_error: crate::camera::canonical_angle(est.pan - gt.ptz.pan).abs(),
        tilt_error: (est.tilt - gt.ptz.tilt).abs(),
        rotation_error,
        focal_error,
    })
}
