//! Pan-tilt-zoom camera model.
//!
//! A PTZ camera is split into a time-invariant base (center `C` and mounting
//! rotation `S`) and the time-varying pan, tilt and focal length. The full
//! projection is `P = K Q_tilt Q_pan S [I | -C]`.
//!
//! Conventions used throughout the crate:
//! - world frame is right-handed, the field lies on `z = 0`;
//! - after `S` the camera frame has `+z` along the optical axis, `+x` right
//!   and `+y` down;
//! - pan rotates about the base `y` axis (positive pans toward `+x`), tilt
//!   rotates about the panned `x` axis (positive tilts up, toward `-y`);
//! - angles are degrees at every public boundary.

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or using a camera.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("base rotation is not orthonormal with det +1 (deviation {deviation:.3e})")]
    NonOrthonormalRotation { deviation: f64 },
    #[error("principal point ({u}, {v}) lies outside the {width}x{height} image")]
    PrincipalPointOutside { u: f64, v: f64, width: u32, height: u32 },
    #[error("image size must be positive")]
    InvalidImageSize,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("focal length must be positive and finite, got {0}")]
    InvalidFocalLength(f64),
    #[error("field-to-image homography is degenerate")]
    DegenerateHomography,
    #[error("ray is outside the open hemisphere in front of the camera")]
    RayOutOfHemisphere,
    #[error("camera file: {0}")]
    Parse(String),
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 && p.y <= self.height as f64
    }

    /// Image corners in clockwise order starting at the origin.
    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let (w, h) = (self.width as f64, self.height as f64);
        [
            Vector2::new(0.0, 0.0),
            Vector2::new(w, 0.0),
            Vector2::new(w, h),
            Vector2::new(0.0, h),
        ]
    }
}

/// Time-invariant part of a PTZ camera: center of projection, mounting
/// rotation, principal point and image size.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraBase {
    center: Vector3<f64>,
    rotation: Matrix3<f64>,
    principal_point: Vector2<f64>,
    image_size: ImageSize,
}

impl CameraBase {
    pub fn new(
        center: Vector3<f64>,
        rotation: Matrix3<f64>,
        principal_point: Vector2<f64>,
        image_size: ImageSize,
    ) -> Result<Self, CameraError> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(CameraError::NonFinite("camera center"));
        }
        if !rotation.iter().all(|v| v.is_finite()) {
            return Err(CameraError::NonFinite("base rotation"));
        }
        if !principal_point.iter().all(|v| v.is_finite()) {
            return Err(CameraError::NonFinite("principal point"));
        }
        if image_size.width == 0 || image_size.height == 0 {
            return Err(CameraError::InvalidImageSize);
        }
        let deviation = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if deviation >= 1e-9 || rotation.determinant() <= 0.0 {
            return Err(CameraError::NonOrthonormalRotation { deviation });
        }
        if !image_size.contains(&principal_point) {
            return Err(CameraError::PrincipalPointOutside {
                u: principal_point.x,
                v: principal_point.y,
                width: image_size.width,
                height: image_size.height,
            });
        }
        Ok(Self {
            center,
            rotation,
            principal_point,
            image_size,
        })
    }

    /// Base with the principal point at the image center.
    pub fn centered(
        center: Vector3<f64>,
        rotation: Matrix3<f64>,
        image_size: ImageSize,
    ) -> Result<Self, CameraError> {
        let pp = Vector2::new(image_size.width as f64 / 2.0, image_size.height as f64 / 2.0);
        Self::new(center, rotation, pp, image_size)
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    /// World-to-base rotation `S`.
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn principal_point(&self) -> &Vector2<f64> {
        &self.principal_point
    }

    pub fn image_size(&self) -> ImageSize {
        self.image_size
    }

    /// Same base with a different center. Used to model base uncertainty.
    pub fn with_center(&self, center: Vector3<f64>) -> Result<Self, CameraError> {
        Self::new(center, self.rotation, self.principal_point, self.image_size)
    }

    /// Same base with a different mounting rotation.
    pub fn with_rotation(&self, rotation: Matrix3<f64>) -> Result<Self, CameraError> {
        Self::new(self.center, rotation, self.principal_point, self.image_size)
    }

    /// Direction of a world point in the base frame, `S (X - C)`.
    pub fn to_base_frame(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (world - self.center)
    }
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn canonical_angle(deg: f64) -> f64 {
    let mut a = deg % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Time-varying pan (degrees), tilt (degrees) and focal length (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtzParams {
    pub pan: f64,
    pub tilt: f64,
    pub focal_length: f64,
}

impl PtzParams {
    /// Validated constructor; angles are wrapped into `(-180, 180]`.
    pub fn new(pan: f64, tilt: f64, focal_length: f64) -> Result<Self, CameraError> {
        if !pan.is_finite() || !tilt.is_finite() {
            return Err(CameraError::NonFinite("pan/tilt"));
        }
        if !(focal_length.is_finite() && focal_length > 0.0) {
            return Err(CameraError::InvalidFocalLength(focal_length));
        }
        Ok(Self {
            pan: canonical_angle(pan),
            tilt: canonical_angle(tilt),
            focal_length,
        })
    }

    /// Pan lies in the valid open range `(-90, 90)` relative to the base.
    pub fn pan_in_valid_range(&self) -> bool {
        self.pan > -90.0 && self.pan < 90.0
    }

    /// `Q_tilt * Q_pan`.
    pub fn rotation(&self) -> Matrix3<f64> {
        tilt_rotation(self.tilt) * pan_rotation(self.pan)
    }

    pub fn intrinsics(&self, principal_point: &Vector2<f64>) -> Matrix3<f64> {
        let f = self.focal_length;
        Matrix3::new(
            f, 0.0, principal_point.x, 0.0, f, principal_point.y, 0.0, 0.0, 1.0,
        )
    }

    /// Horizontal field of view in degrees for an image of the given width.
    pub fn horizontal_fov(&self, width: u32) -> f64 {
        2.0 * (width as f64 / (2.0 * self.focal_length)).atan().to_degrees()
    }
}

/// Pan rotation `Q_pan` about the base `y` axis.
pub fn pan_rotation(pan_deg: f64) -> Matrix3<f64> {
    let (s, c) = pan_deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

/// Tilt rotation `Q_tilt` about the `x` axis.
pub fn tilt_rotation(tilt_deg: f64) -> Matrix3<f64> {
    let (s, c) = tilt_deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

/// Level mounting rotation for a world frame with `+z` up: the base optical
/// axis is horizontal at `azimuth_deg` (counter-clockwise from world `+x`),
/// base `y` points straight down.
pub fn level_rotation(azimuth_deg: f64) -> Matrix3<f64> {
    let (s, c) = azimuth_deg.to_radians().sin_cos();
    // rows: right, down, forward
    Matrix3::new(s, -c, 0.0, 0.0, 0.0, -1.0, c, s, 0.0)
}

/// Recovers `(pan, tilt)` in degrees from a rotation of the form
/// `Q_tilt * Q_pan`. Any roll component is ignored.
pub fn pan_tilt_from_rotation(r: &Matrix3<f64>) -> (f64, f64) {
    let pan = (-r[(0, 2)]).atan2(r[(0, 0)]);
    let tilt = (-r[(2, 1)]).atan2(r[(1, 1)]);
    (pan.to_degrees(), tilt.to_degrees())
}

/// A full PTZ camera: base plus current pan/tilt/zoom state.
#[derive(Debug, Clone, PartialEq)]
pub struct PtzCamera {
    pub base: CameraBase,
    pub ptz: PtzParams,
}

impl PtzCamera {
    pub fn new(base: CameraBase, ptz: PtzParams) -> Self {
        Self { base, ptz }
    }

    /// World-to-camera rotation `Q_tilt Q_pan S`.
    pub fn rotation(&self) -> Matrix3<f64> {
        self.ptz.rotation() * self.base.rotation
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        self.ptz.intrinsics(&self.base.principal_point)
    }

    /// The 3x4 projection matrix `K Q_tilt Q_pan S [I | -C]`.
    pub fn compose_projection(&self) -> Matrix3x4<f64> {
        let kr = self.intrinsics() * self.rotation();
        let t = -(kr * self.base.center);
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&kr);
        p.set_column(3, &t);
        p
    }

    /// Point in camera coordinates.
    pub fn to_camera_frame(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * (world - self.base.center)
    }

    /// Projects a world point to pixels. Returns `None` when the point has
    /// non-positive depth.
    pub fn project_point(&self, world: &Vector3<f64>) -> Option<Vector2<f64>> {
        project_camera_point(
            &self.to_camera_frame(world),
            self.ptz.focal_length,
            &self.base.principal_point,
        )
    }

    /// Unit viewing direction of a pixel in world coordinates.
    pub fn back_project(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let pp = &self.base.principal_point;
        let f = self.ptz.focal_length;
        let m = Vector3::new((pixel.x - pp.x) / f, (pixel.y - pp.y) / f, 1.0);
        (self.rotation().transpose() * m).normalize()
    }

    /// Intersection of a pixel's viewing ray with the plane `z = 0`, if the
    /// ray hits it in front of the camera.
    pub fn pixel_to_ground(&self, pixel: &Vector2<f64>) -> Option<Vector2<f64>> {
        let dir = self.back_project(pixel);
        let c = &self.base.center;
        if dir.z.abs() < 1e-12 {
            return None;
        }
        let t = -c.z / dir.z;
        if t <= 0.0 {
            return None;
        }
        let hit = c + dir * t;
        Some(Vector2::new(hit.x, hit.y))
    }

    /// Homography mapping field-plane points `(x, y, 1)` to image pixels:
    /// columns 1, 2 and 4 of the projection matrix.
    pub fn field_to_image_homography(&self) -> Result<Matrix3<f64>, CameraError> {
        if self.base.center.z.abs() < 1e-9 {
            return Err(CameraError::DegenerateHomography);
        }
        let p = self.compose_projection();
        let h = Matrix3::from_columns(&[p.column(0).into_owned(), p.column(1).into_owned(), p.column(3).into_owned()]);
        let scale = h.amax();
        if scale == 0.0 || !scale.is_finite() || (h / scale).determinant().abs() <= 1e-12 {
            return Err(CameraError::DegenerateHomography);
        }
        Ok(h)
    }
}

/// Pinhole projection of a camera-frame point with the dehomogenization
/// guard shared by all projection paths.
pub(crate) fn project_camera_point(
    p: &Vector3<f64>,
    focal_length: f64,
    principal_point: &Vector2<f64>,
) -> Option<Vector2<f64>> {
    if p.z <= 0.0 || p.z.abs() < 1e-12 {
        return None;
    }
    Some(Vector2::new(
        focal_length * p.x / p.z + principal_point.x,
        focal_length * p.y / p.z + principal_point.y,
    ))
}

/// Serialized form of a camera base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseRecord {
    pub center: [f64; 3],
    /// Row-major world-to-base rotation.
    pub rotation: [f64; 9],
    pub principal_point: [f64; 2],
    pub image_size: [u32; 2],
}

impl From<&CameraBase> for BaseRecord {
    fn from(b: &CameraBase) -> Self {
        let r = b.rotation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i * 3 + j] = r[(i, j)];
            }
        }
        Self {
            center: [b.center.x, b.center.y, b.center.z],
            rotation,
            principal_point: [b.principal_point.x, b.principal_point.y],
            image_size: [b.image_size.width, b.image_size.height],
        }
    }
}

impl TryFrom<&BaseRecord> for CameraBase {
    type Error = CameraError;

    fn try_from(r: &BaseRecord) -> Result<Self, Self::Error> {
        CameraBase::new(
            Vector3::from(r.center),
            Matrix3::from_row_slice(&r.rotation),
            Vector2::from(r.principal_point),
            ImageSize::new(r.image_size[0], r.image_size[1]),
        )
    }
}

/// One camera record: base plus PTZ state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub base: BaseRecord,
    pub ptz: PtzParams,
}

impl From<&PtzCamera> for CameraRecord {
    fn from(c: &PtzCamera) -> Self {
        Self {
            base: BaseRecord::from(&c.base),
            ptz: c.ptz,
        }
    }
}

impl TryFrom<&CameraRecord> for PtzCamera {
    type Error = CameraError;

    fn try_from(r: &CameraRecord) -> Result<Self, Self::Error> {
        let base = CameraBase::try_from(&r.base)?;
        let ptz = PtzParams::new(r.ptz.pan, r.ptz.tilt, r.ptz.focal_length)?;
        Ok(PtzCamera::new(base, ptz))
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CameraFile {
    #[serde(default)]
    camera: Vec<CameraRecord>,
}

/// Parses a camera file: a TOML document with one `[[camera]]` table per
/// record.
pub fn parse_cameras(text: &str) -> Result<Vec<PtzCamera>, CameraError> {
    let file: CameraFile = toml::from_str(text).map_err(|e| CameraError::Parse(e.to_string()))?;
    file.camera.iter().map(PtzCamera::try_from).collect()
}

/// Writes cameras in the format read by [`parse_cameras`].
pub fn format_cameras(cameras: &[PtzCamera]) -> String {
    let file = CameraFile {
        camera: cameras.iter().map(CameraRecord::from).collect(),
    };
    toml::to_string(&file).expect("camera records always serialize")
}

/// Parses a standalone base record (`[base]`-less TOML table).
pub fn parse_base(text: &str) -> Result<CameraBase, CameraError> {
    let record: BaseRecord = toml::from_str(text).map_err(|e| CameraError::Parse(e.to_string()))?;
    CameraBase::try_from(&record)
}

pub fn format_base(base: &CameraBase) -> String {
    toml::to_string(&BaseRecord::from(base)).expect("base records always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_base() -> CameraBase {
        CameraBase::new(
            Vector3::zeros(),
            Matrix3::identity(),
            Vector2::zeros(),
            ImageSize::new(1280, 720),
        )
        .unwrap()
    }

    pub(crate) fn random_camera(rng: &mut ChaCha8Rng) -> PtzCamera {
        let yaw: f64 = rng.random_range(-3.0..3.0);
        let roll: f64 = rng.random_range(-0.1..0.1);
        let s = nalgebra::Rotation3::from_euler_angles(roll, 0.2, yaw).into_inner();
        let base = CameraBase::centered(
            Vector3::new(
                rng.random_range(-50.0..150.0),
                rng.random_range(-50.0..100.0),
                rng.random_range(5.0..30.0),
            ),
            s,
            ImageSize::new(1280, 720),
        )
        .unwrap();
        let ptz = PtzParams::new(
            rng.random_range(-80.0..80.0),
            rng.random_range(-40.0..40.0),
            rng.random_range(500.0..6000.0),
        )
        .unwrap();
        PtzCamera::new(base, ptz)
    }

    #[test]
    fn identity_composition() {
        let cam = PtzCamera::new(identity_base(), PtzParams::new(0.0, 0.0, 1.0).unwrap());
        let p = cam.compose_projection();
        let mut expected = Matrix3x4::zeros();
        expected.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        assert_eq!(p, expected);
    }

    #[test]
    fn quarter_pan_sends_forward_axis_to_infinity() {
        // pan = 90 turns the optical axis onto base +x; the old forward axis
        // ends up on the camera -x axis with zero depth.
        let cam = PtzCamera::new(identity_base(), PtzParams::new(90.0, 0.0, 1.0).unwrap());
        let h = cam.compose_projection() * nalgebra::Vector4::new(0.0, 0.0, 1.0, 0.0);
        assert!(h.z.abs() < 1e-15);
        assert!(h.x < 0.0);
        assert!(cam.project_point(&Vector3::new(0.0, 0.0, 1.0)).is_none());
        let right = cam.project_point(&Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(right.norm() < 1e-12);
    }

    #[test]
    fn projection_matches_step_by_step_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let cam = random_camera(&mut rng);
            let x = cam.base.center()
                + cam.back_project(&Vector2::new(
                    rng.random_range(0.0..1280.0),
                    rng.random_range(0.0..720.0),
                )) * rng.random_range(5.0..200.0);
            // oracle: translate, rotate by S, pan, tilt, then intrinsics.
            let (t, p) = (cam.ptz.tilt.to_radians(), cam.ptz.pan.to_radians());
            let v = cam.base.rotation() * (x - cam.base.center());
            let panned = Vector3::new(
                p.cos() * v.x - p.sin() * v.z,
                v.y,
                p.sin() * v.x + p.cos() * v.z,
            );
            let tilted = Vector3::new(
                panned.x,
                t.cos() * panned.y + t.sin() * panned.z,
                -t.sin() * panned.y + t.cos() * panned.z,
            );
            let f = cam.ptz.focal_length;
            let pp = cam.base.principal_point();
            let oracle = Vector2::new(f * tilted.x / tilted.z + pp.x, f * tilted.y / tilted.z + pp.y);
            let hp = cam.compose_projection() * x.push(1.0);
            let via_matrix = Vector2::new(hp.x / hp.z, hp.y / hp.z);
            let via_point = cam.project_point(&x).unwrap();
            assert!((oracle - via_matrix).norm() < 1e-6, "{oracle} {via_matrix}");
            assert!((oracle - via_point).norm() < 1e-6);
        }
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cam = random_camera(&mut rng);
        let axis = cam.rotation().transpose() * Vector3::z();
        let p = cam.project_point(&(cam.base.center() + axis * 17.0)).unwrap();
        assert!((p - cam.base.principal_point()).norm() < 1e-9);
    }

    #[test]
    fn behind_camera_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cam = random_camera(&mut rng);
        let axis = cam.rotation().transpose() * Vector3::z();
        assert!(cam.project_point(&(cam.base.center() - axis * 3.0)).is_none());
        assert!(cam.project_point(cam.base.center()).is_none());
    }

    #[test]
    fn pixel_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let cam = random_camera(&mut rng);
            let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
            let dir = cam.back_project(&px);
            // point on the ray at camera depth 10
            let depth = (cam.rotation() * dir).z;
            let x = cam.base.center() + dir * (10.0 / depth);
            let back = cam.project_point(&x).unwrap();
            assert!((back - px).norm() < 1e-9, "{}", (back - px).norm());
        }
    }

    #[test]
    fn rotations_are_orthonormal_and_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a: f64 = rng.random_range(-180.0..180.0);
            let b: f64 = rng.random_range(-180.0..180.0);
            for q in [pan_rotation(a), tilt_rotation(b)] {
                assert!((q.transpose() * q - Matrix3::identity()).amax() < 1e-12);
                assert!((q.determinant() - 1.0).abs() < 1e-12);
            }
            assert!((pan_rotation(a) * pan_rotation(b) - pan_rotation(a + b)).amax() < 1e-12);
            assert!((tilt_rotation(a) * tilt_rotation(b) - tilt_rotation(a + b)).amax() < 1e-12);
            let ptz = PtzParams::new(a * 0.4, b * 0.4, 1000.0).unwrap();
            assert!((ptz.rotation() - tilt_rotation(ptz.tilt) * pan_rotation(ptz.pan)).amax() < 1e-15);
            let (p, t) = pan_tilt_from_rotation(&ptz.rotation());
            assert!((p - ptz.pan).abs() < 1e-9 && (t - ptz.tilt).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_matches_single_point_matrix_form() {
        // explicit Q_tilt Q_pan product in terms of sines and cosines
        let ptz = PtzParams::new(23.0, -11.0, 1.0).unwrap();
        let (sp, cp) = 23f64.to_radians().sin_cos();
        let (st, ct) = (-11f64).to_radians().sin_cos();
        let expected = Matrix3::new(cp, 0.0, -sp, st * sp, ct, st * cp, ct * sp, -st, ct * cp);
        assert!((ptz.rotation() - expected).amax() < 1e-15);
    }

    #[test]
    fn homography_agrees_with_point_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut checked = 0;
        while checked < 50 {
            let cam = random_camera(&mut rng);
            let h = cam.field_to_image_homography().unwrap();
            let x = Vector3::new(rng.random_range(-20.0..120.0), rng.random_range(-20.0..90.0), 0.0);
            let Some(p) = cam.project_point(&x) else { continue };
            if p.norm() > 1e5 {
                continue;
            }
            let hp = h * Vector3::new(x.x, x.y, 1.0);
            let q = Vector2::new(hp.x / hp.z, hp.y / hp.z);
            assert!((p - q).norm() < 1e-9, "{}", (p - q).norm());
            checked += 1;
        }
    }

    #[test]
    fn homography_on_ground_plane_is_degenerate() {
        let base = CameraBase::centered(
            Vector3::new(10.0, 10.0, 0.0),
            Matrix3::identity(),
            ImageSize::new(640, 480),
        )
        .unwrap();
        let cam = PtzCamera::new(base, PtzParams::new(0.0, 0.0, 500.0).unwrap());
        assert_eq!(cam.field_to_image_homography(), Err(CameraError::DegenerateHomography));
    }

    #[test]
    fn base_validation() {
        let bad = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            CameraBase::centered(Vector3::zeros(), bad, ImageSize::new(10, 10)),
            Err(CameraError::NonOrthonormalRotation { .. })
        ));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(CameraBase::centered(Vector3::zeros(), reflection, ImageSize::new(10, 10)).is_err());
        assert!(matches!(
            CameraBase::new(
                Vector3::zeros(),
                Matrix3::identity(),
                Vector2::new(11.0, 5.0),
                ImageSize::new(10, 10)
            ),
            Err(CameraError::PrincipalPointOutside { .. })
        ));
        assert!(PtzParams::new(0.0, 0.0, 0.0).is_err());
        assert!(PtzParams::new(0.0, f64::NAN, 10.0).is_err());
    }

    #[test]
    fn angles_are_canonicalized() {
        assert_eq!(PtzParams::new(360.0, 0.0, 1.0).unwrap().pan, 0.0);
        assert_eq!(canonical_angle(-180.0), 180.0);
        assert_eq!(canonical_angle(190.0), -170.0);
        assert_eq!(canonical_angle(-725.0), -5.0);
    }

    #[test]
    fn camera_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cams: Vec<_> = (0..3).map(|_| random_camera(&mut rng)).collect();
        let text = format_cameras(&cams);
        let back = parse_cameras(&text).unwrap();
        assert_eq!(cams, back);
        assert!(parse_cameras("[[camera]]\nbase = 3").is_err());
    }
}
