//! Planar polygon helpers: signed area and convex clipping.

use nalgebra::{Vector2, Vector3};

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Vector2<f64>]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.x * b.y - a.y * b.x;
    }
    0.5 * acc
}

pub fn area(poly: &[Vector2<f64>]) -> f64 {
    signed_area(poly).abs()
}

/// Returns the polygon with counter-clockwise orientation.
pub fn to_ccw(mut poly: Vec<Vector2<f64>>) -> Vec<Vector2<f64>> {
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Keeps the part of `poly` where `f(p) >= 0` for an affine function
/// `f(p) = h.x * p.x + h.y * p.y + h.z`.
pub fn clip_half_plane(poly: &[Vector2<f64>], h: &Vector3<f64>) -> Vec<Vector2<f64>> {
    let eval = |p: &Vector2<f64>| h.x * p.x + h.y * p.y + h.z;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (fa, fb) = (eval(&a), eval(&b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let t = fa / (fa - fb);
            out.push(a + (b - a) * t);
        }
    }
    out
}

/// Sutherland-Hodgman clip of `subject` by the convex polygon `clip`.
/// Both polygons may have either orientation.
pub fn clip_convex(subject: &[Vector2<f64>], clip: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    if subject.len() < 3 || clip.len() < 3 {
        return Vec::new();
    }
    let clip = to_ccw(clip.to_vec());
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        // inside is left of a->b: cross(b - a, p - a) >= 0
        let e = b - a;
        let h = Vector3::new(-e.y, e.x, e.y * a.x - e.x * a.y);
        out = clip_half_plane(&out, &h);
    }
    if out.len() < 3 {
        Vec::new()
    } else {
        out
    }
}

/// Area of the intersection of two convex polygons.
pub fn convex_intersection_area(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> f64 {
    area(&clip_convex(a, b))
}
