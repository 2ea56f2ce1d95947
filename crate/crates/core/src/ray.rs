//! Rays through the camera center, parameterized by pan and tilt angles.
//!
//! A ray `(pan, tilt)` is the optical axis of the camera when it is panned
//! and tilted by exactly those angles, expressed in the base frame. Two
//! projection models are provided:
//!
//! - [`project_ray`] / [`pixel_to_ray`]: the decoupled tangent model
//!   `x = f tan(pan_r - pan) + u`, `y = f tan(tilt_r - tilt) + v`. It treats
//!   the two axes independently and is exact only along the image center
//!   lines of an untilted camera.
//! - [`project_ray_exact`] / [`pixel_to_ray_exact`]: the spherical model
//!   consistent with the full projection matrix. Calibration, labeling and
//!   pose estimation use this one.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{canonical_angle, project_camera_point, CameraError, PtzParams};

/// Viewing direction as `(pan, tilt)` in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub pan: f64,
    pub tilt: f64,
}

impl Ray {
    pub fn new(pan: f64, tilt: f64) -> Self {
        Self { pan, tilt }
    }

    /// Unit direction in the base frame.
    pub fn direction(&self) -> Vector3<f64> {
        let (sp, cp) = self.pan.to_radians().sin_cos();
        let (st, ct) = self.tilt.to_radians().sin_cos();
        Vector3::new(sp * ct, -st, cp * ct)
    }

    /// Canonical ray of a base-frame direction (need not be normalized).
    pub fn from_direction(d: &Vector3<f64>) -> Self {
        let pan = d.x.atan2(d.z).to_degrees();
        let tilt = (-d.y).atan2(d.x.hypot(d.z)).to_degrees();
        Self { pan, tilt }
    }

    /// The same direction with pan wrapped into `(-180, 180]`.
    pub fn canonical(&self) -> Self {
        Self::from_direction(&self.direction())
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.pan, self.tilt)
    }

    /// Great-circle angle to another ray in degrees.
    pub fn angle_to(&self, other: &Ray) -> f64 {
        let a = self.direction();
        let b = other.direction();
        a.cross(&b).norm().atan2(a.dot(&b)).to_degrees()
    }
}

/// Decoupled tangent projection of a ray.
pub fn project_ray(
    ptz: &PtzParams,
    principal_point: &Vector2<f64>,
    ray: &Ray,
) -> Result<Vector2<f64>, CameraError> {
    let dp = canonical_angle(ray.pan - ptz.pan);
    let dt = canonical_angle(ray.tilt - ptz.tilt);
    if dp.abs() >= 90.0 || dt.abs() >= 90.0 {
        return Err(CameraError::RayOutOfHemisphere);
    }
    let f = ptz.focal_length;
    Ok(Vector2::new(
        f * dp.to_radians().tan() + principal_point.x,
        f * dt.to_radians().tan() + principal_point.y,
    ))
}

/// Inverse of [`project_ray`]: `(pan + atan((x-u)/f), tilt + atan((y-v)/f))`.
pub fn pixel_to_ray(ptz: &PtzParams, principal_point: &Vector2<f64>, pixel: &Vector2<f64>) -> Ray {
    let f = ptz.focal_length;
    Ray {
        pan: ptz.pan + ((pixel.x - principal_point.x) / f).atan().to_degrees(),
        tilt: ptz.tilt + ((pixel.y - principal_point.y) / f).atan().to_degrees(),
    }
}

/// Exact projection of a ray through a camera with the given PTZ state.
/// Returns `None` when the ray points behind the camera.
pub fn project_ray_exact(
    ptz: &PtzParams,
    principal_point: &Vector2<f64>,
    ray: &Ray,
) -> Option<Vector2<f64>> {
    let m = ptz.rotation() * ray.direction();
    project_camera_point(&m, ptz.focal_length, principal_point)
}

/// Exact inverse of [`project_ray_exact`].
pub fn pixel_to_ray_exact(
    ptz: &PtzParams,
    principal_point: &Vector2<f64>,
    pixel: &Vector2<f64>,
) -> Ray {
    let f = ptz.focal_length;
    let m = Vector3::new(
        (pixel.x - principal_point.x) / f,
        (pixel.y - principal_point.y) / f,
        1.0,
    );
    Ray::from_direction(&(ptz.rotation().transpose() * m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraBase, ImageSize, PtzCamera};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ptz(pan: f64, tilt: f64, f: f64) -> PtzParams {
        PtzParams::new(pan, tilt, f).unwrap()
    }

    #[test]
    fn center_ray_hits_principal_point() {
        let p = ptz(31.0, -7.0, 2200.0);
        let pp = Vector2::new(640.0, 360.0);
        let r = Ray::new(31.0, -7.0);
        assert!((project_ray(&p, &pp, &r).unwrap() - pp).norm() < 1e-12);
        assert!((project_ray_exact(&p, &pp, &r).unwrap() - pp).norm() < 1e-9);
        let back = pixel_to_ray(&p, &pp, &pp);
        assert_eq!((back.pan, back.tilt), (31.0, -7.0));
        let back = pixel_to_ray_exact(&p, &pp, &pp);
        assert!((back.pan - 31.0).abs() < 1e-12 && (back.tilt + 7.0).abs() < 1e-12);
    }

    #[test]
    fn forty_five_degree_pan_offset() {
        let p = ptz(12.0, 0.0, 100.0);
        let pp = Vector2::new(640.0, 360.0);
        let px = project_ray(&p, &pp, &Ray::new(57.0, 0.0)).unwrap();
        assert!((px - Vector2::new(740.0, 360.0)).norm() < 1e-9);
        let px = project_ray_exact(&p, &pp, &Ray::new(57.0, 0.0)).unwrap();
        assert!((px - Vector2::new(740.0, 360.0)).norm() < 1e-9);

        let r = pixel_to_ray(&p, &pp, &Vector2::new(740.0, 360.0));
        assert!((r.pan - 57.0).abs() < 1e-12 && r.tilt == 0.0);
        let r = pixel_to_ray_exact(&p, &pp, &Vector2::new(740.0, 360.0));
        assert!((r.pan - 57.0).abs() < 1e-12 && r.tilt.abs() < 1e-12);
    }

    #[test]
    fn out_of_hemisphere_rejected() {
        let p = ptz(0.0, 0.0, 100.0);
        let pp = Vector2::new(0.0, 0.0);
        assert_eq!(
            project_ray(&p, &pp, &Ray::new(95.0, 0.0)),
            Err(CameraError::RayOutOfHemisphere)
        );
        assert!(project_ray_exact(&p, &pp, &Ray::new(0.0, 100.0)).is_none());
    }

    #[test]
    fn decoupled_round_trip_on_random_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pp = Vector2::new(640.0, 360.0);
        for _ in 0..1000 {
            let p = ptz(
                rng.random_range(-80.0..80.0),
                rng.random_range(-40.0..40.0),
                rng.random_range(300.0..8000.0),
            );
            let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
            let back = project_ray(&p, &pp, &pixel_to_ray(&p, &pp, &px)).unwrap();
            assert!((back - px).norm() < 1e-9);
            let back = project_ray_exact(&p, &pp, &pixel_to_ray_exact(&p, &pp, &px)).unwrap();
            assert!((back - px).norm() < 1e-9);
        }
    }

    #[test]
    fn exact_ray_projection_matches_full_camera() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let s = nalgebra::Rotation3::from_euler_angles(
                rng.random_range(-0.2..0.2),
                rng.random_range(-3.0..3.0),
                rng.random_range(-0.2..0.2),
            )
            .into_inner();
            let base = CameraBase::centered(
                Vector3::new(rng.random_range(-50.0..50.0), 3.0, 20.0),
                s,
                ImageSize::new(1280, 720),
            )
            .unwrap();
            let cam = PtzCamera::new(
                base,
                ptz(
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-30.0..30.0),
                    rng.random_range(800.0..5000.0),
                ),
            );
            let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
            let world = cam.base.center() + cam.back_project(&px) * rng.random_range(10.0..300.0);
            let ray = Ray::from_direction(&cam.base.to_base_frame(&world));
            let via_ray =
                project_ray_exact(&cam.ptz, cam.base.principal_point(), &ray).unwrap();
            let via_point = cam.project_point(&world).unwrap();
            assert!((via_ray - via_point).norm() < 1e-6);
        }
    }

    #[test]
    fn decoupled_model_is_exact_on_untilted_center_row() {
        let p = ptz(20.0, 0.0, 1500.0);
        let pp = Vector2::new(640.0, 360.0);
        for x in [0.0, 100.0, 640.0, 1100.0] {
            let px = Vector2::new(x, 360.0);
            let a = pixel_to_ray(&p, &pp, &px);
            let b = pixel_to_ray_exact(&p, &pp, &px);
            assert!((a.pan - b.pan).abs() < 1e-9 && (a.tilt - b.tilt).abs() < 1e-9);
        }
    }

    #[test]
    fn direction_round_trip() {
        let r = Ray::new(-135.0, 42.0);
        let d = r.direction();
        assert!((d.norm() - 1.0).abs() < 1e-15);
        let back = Ray::from_direction(&(d * 3.5));
        assert!((back.pan - r.pan).abs() < 1e-12 && (back.tilt - r.tilt).abs() < 1e-12);
        assert!(Ray::new(10.0, 0.0).angle_to(&Ray::new(11.0, 0.0)) - 1.0 < 1e-12);
        assert!((Ray::new(0.0, 0.0).direction() - Vector3::z()).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn exact_inverse_property(
            pan in -85.0f64..85.0, tilt in -60.0f64..60.0, f in 200.0f64..9000.0,
            x in 0.0f64..1920.0, y in 0.0f64..1080.0,
        ) {
            let p = ptz(pan, tilt, f);
            let pp = Vector2::new(960.0, 540.0);
            let px = Vector2::new(x, y);
            let back = project_ray_exact(&p, &pp, &pixel_to_ray_exact(&p, &pp, &px)).unwrap();
            prop_assert!((back - px).norm() < 1e-8);
        }
    }
}
