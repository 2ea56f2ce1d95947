//! Field marking overlays projected into the image.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::PtzCamera;
use crate::field::FieldModel;

/// Default sampling step along markings, in meters.
pub const DEFAULT_SAMPLE_STEP: f64 = 0.25;

/// Points closer than this to the camera plane are clipped away (meters).
const NEAR_PLANE: f64 = 1e-3;

/// One visible run of a projected marking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayPolyline {
    /// Index into [`FieldModel::markings`].
    pub marking: usize,
    pub points: Vec<[f64; 2]>,
}

/// Projects every marking into the image, clipped to the image rectangle.
///
/// Each marking is sampled every `sample_step` meters, clipped against the
/// camera near plane in 3D and then against the image bounds in 2D. A
/// marking that leaves and re-enters the image yields several polylines.
pub fn render_field_overlay(
    cam: &PtzCamera,
    field: &FieldModel,
    sample_step: f64,
) -> Vec<OverlayPolyline> {
    assert!(sample_step > 0.0, "sample step must be positive");
    let size = cam.base.image_size();
    let (w, h) = (size.width as f64, size.height as f64);
    let f = cam.ptz.focal_length;
    let pp = *cam.base.principal_point();
    let project = |p: &Vector3<f64>| Vector2::new(f * p.x / p.z + pp.x, f * p.y / p.z + pp.y);

    let mut out = Vec::new();
    for (idx, marking) in field.markings.iter().enumerate() {
        let samples: Vec<Vector3<f64>> = marking
            .sample(sample_step)
            .iter()
            .map(|p| cam.to_camera_frame(&Vector3::new(p.x, p.y, 0.0)))
            .collect();
        let mut current: Vec<Vector2<f64>> = Vec::new();
        for seg in samples.windows(2) {
            let Some((a, b)) = clip_near(seg[0], seg[1]) else {
                flush(&mut current, idx, &mut out);
                continue;
            };
            let Some((pa, pb)) = clip_segment_to_rect(project(&a), project(&b), w, h) else {
                flush(&mut current, idx, &mut out);
                continue;
            };
            match current.last() {
                Some(last) if (last - pa).norm() < 1e-9 => {}
                _ => {
                    flush(&mut current, idx, &mut out);
                    current.push(pa);
                }
            }
            current.push(pb);
        }
        flush(&mut current, idx, &mut out);
    }
    out
}

fn flush(current: &mut Vec<Vector2<f64>>, marking: usize, out: &mut Vec<OverlayPolyline>) {
    if current.len() >= 2 {
        out.push(OverlayPolyline {
            marking,
            points: current.iter().map(|p| [p.x, p.y]).collect(),
        });
    }
    current.clear();
}

/// Clips a camera-frame segment to `z >= NEAR_PLANE`.
fn clip_near(a: Vector3<f64>, b: Vector3<f64>) -> Option<(Vector3<f64>, Vector3<f64>)> {
    match (a.z >= NEAR_PLANE, b.z >= NEAR_PLANE) {
        (true, true) => Some((a, b)),
        (false, false) => None,
        (a_in, _) => {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let m = a + (b - a) * t;
            if a_in {
                Some((a, m))
            } else {
                Some((m, b))
            }
        }
    }
}

/// Liang-Barsky clipping of a segment to `[0, w] x [0, h]`.
fn clip_segment_to_rect(
    a: Vector2<f64>,
    b: Vector2<f64>,
    w: f64,
    h: f64,
) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-d.x, a.x), (d.x, w - a.x), (-d.y, a.y), (d.y, h - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    let clamp = |p: Vector2<f64>| Vector2::new(p.x.clamp(0.0, w), p.y.clamp(0.0, h));
    Some((clamp(a + d * t0), clamp(a + d * t1)))
}
