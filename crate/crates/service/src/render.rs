//! Synthetic session images: field markings drawn over a textured pitch.

use nalgebra::Vector2;
use ptzcal_core::camera::{CameraBase, PtzCamera, PtzParams};
use ptzcal_core::descriptor::GrayImage;
use ptzcal_core::overlay::render_field_overlay;
use ptzcal_core::{rng, FieldModel};
use rand::Rng;

const LINE_HALF_WIDTH: f64 = 1.5;

/// PTZ state of a synthetic render: pan in [15, 75], tilt in [-14, -5]
/// degrees and focal length in [1500, 5000] pixels.
pub fn synthetic_ptz(seed: u64) -> PtzParams {
    let mut g = rng::stream(seed, &[]);
    PtzParams::new(
        g.random_range(15.0..75.0),
        g.random_range(-14.0..-5.0),
        g.random_range(1500.0..5000.0),
    )
    .expect("ranges are valid")
}

fn distance_to_segment(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (p - (a + t * ab)).norm()
}

/// Gray image of the markings seen by the camera: pitch pixels carry a
/// low-amplitude deterministic texture, markings are bright.
pub fn render(base: &CameraBase, field: &FieldModel, ptz: PtzParams, seed: u64) -> GrayImage {
    let cam = PtzCamera::new(base.clone(), ptz);
    let size = base.image_size();
    let (w, h) = (size.width as usize, size.height as usize);
    let mut g = rng::stream(seed, &[1]);
    let mut data: Vec<u8> = (0..w * h).map(|_| 70 + g.random_range(0..12u8)).collect();
    for line in render_field_overlay(&cam, field, 0.1) {
        for seg in line.points.windows(2) {
            let (a, b) = (Vector2::from(seg[0]), Vector2::from(seg[1]));
            let x0 = (a.x.min(b.x) - LINE_HALF_WIDTH - 1.0).floor().max(0.0) as usize;
            let x1 = ((a.x.max(b.x) + LINE_HALF_WIDTH + 1.0).ceil() as usize).min(w);
            let y0 = (a.y.min(b.y) - LINE_HALF_WIDTH - 1.0).floor().max(0.0) as usize;
            let y1 = ((a.y.max(b.y) + LINE_HALF_WIDTH + 1.0).ceil() as usize).min(h);
            for y in y0..y1 {
                for x in x0..x1 {
                    let d = distance_to_segment(Vector2::new(x as f64 + 0.5, y as f64 + 0.5), a, b);
                    if d <= LINE_HALF_WIDTH {
                        data[y * w + x] = 235;
                    }
                }
            }
        }
    }
    GrayImage::new(w, h, data).expect("image size matches the base")
}
