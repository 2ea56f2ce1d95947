//! Two-point calibration of a PTZ camera with a known base.
//!
//! The pipeline is: focal length from the angle between two viewing rays,
//! pan and tilt from one point through a quadratic in `tan(pan)`, then a
//! Levenberg-Marquardt polish of `(pan, tilt, focal)` over both points.

use std::fmt;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraBase, PtzCamera, PtzParams};
use crate::lm;

/// Minimum angle between the two viewing rays (radians).
const MIN_RAY_ANGLE: f64 = 1e-4;
/// Below this `|U|` the tilt is recovered from the vertical coordinate alone.
const SMALL_U: f64 = 1e-4;
/// Single-point candidates must reproject within this many pixels.
const CANDIDATE_TOLERANCE_PX: f64 = 1e-3;

/// A 3D world point and its observed pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub world: Vector3<f64>,
    pub pixel: Vector2<f64>,
}

impl Correspondence {
    pub fn new(world: Vector3<f64>, pixel: Vector2<f64>) -> Self {
        Self { world, pixel }
    }
}

/// Which precondition made a configuration degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    NonFiniteInput,
    CoincidentWorldPoints,
    PointAtCameraCenter,
    CoincidentPixels,
    /// Both world points are (nearly) collinear with the camera center.
    CollinearWithCenter,
    /// The world point lies on the pan axis through the camera center.
    PointOnPanAxis,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Degeneracy::NonFiniteInput => "correspondence contains non-finite values",
            Degeneracy::CoincidentWorldPoints => "world points coincide",
            Degeneracy::PointAtCameraCenter => "a world point coincides with the camera center",
            Degeneracy::CoincidentPixels => "pixels coincide",
            Degeneracy::CollinearWithCenter => "world points are collinear with the camera center",
            Degeneracy::PointOnPanAxis => "world point lies on the pan axis",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("degenerate configuration: {0}")]
    Degenerate(Degeneracy),
    #[error("no real positive focal length solves the two-point constraint")]
    NoFocalSolution,
    #[error("no pan/tilt solution reprojects the point")]
    NoPanTiltSolution,
    #[error("need at least {required} correspondences, got {got}")]
    TooFewCorrespondences { required: usize, got: usize },
    #[error("focal length must be positive, got {0}")]
    InvalidFocalLength(f64),
    #[error("calibration failed on every focal/pan/tilt branch")]
    CalibrationFailed,
}

/// Two correspondences seen by a camera with a known base.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointProblem {
    base: CameraBase,
    a: Correspondence,
    b: Correspondence,
}

impl TwoPointProblem {
    pub fn new(base: CameraBase, a: Correspondence, b: Correspondence) -> Result<Self, CalibError> {
        let finite = |c: &Correspondence| {
            c.world.iter().chain(c.pixel.iter()).all(|v| v.is_finite())
        };
        if !finite(&a) || !finite(&b) {
            return Err(CalibError::Degenerate(Degeneracy::NonFiniteInput));
        }
        if (a.world - b.world).norm() <= 1e-6 {
            return Err(CalibError::Degenerate(Degeneracy::CoincidentWorldPoints));
        }
        let c = base.center();
        if (a.world - c).norm() <= 1e-6 || (b.world - c).norm() <= 1e-6 {
            return Err(CalibError::Degenerate(Degeneracy::PointAtCameraCenter));
        }
        if (a.pixel - b.pixel).norm() <= 1e-6 {
            return Err(CalibError::Degenerate(Degeneracy::CoincidentPixels));
        }
        Ok(Self { base, a, b })
    }

    pub fn base(&self) -> &CameraBase {
        &self.base
    }

    pub fn first(&self) -> &Correspondence {
        &self.a
    }

    pub fn second(&self) -> &Correspondence {
        &self.b
    }
}

/// Calibrated PTZ state with its fit quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibSolution {
    pub ptz: PtzParams,
    /// Root mean squared reprojection distance over the correspondences.
    pub reprojection_rmse: f64,
    pub converged: bool,
}

/// Focal length candidates for a two-point problem.
///
/// Squaring the ray-angle cosine constraint gives a quadratic in `f^2`
/// with centered pixels `x1, x2` and unit world directions `X1, X2`:
/// `(d^2-1) f^4 + (d^2(a+b) - 2c) f^2 + (d^2 ab - c^2) = 0`, where
/// `a = x1.x1`, `b = x2.x2`, `c = x1.x2`, `d = X1.X2`.
///
/// Every positive root that satisfies the unsquared constraint is returned.
/// The first entry is the closed-form branch
/// `f^2 = 2(d^2 ab - c^2) / (2c - d^2(a+b) + sqrt(disc))` whenever that
/// branch is valid.
pub fn focal_from_two_points(problem: &TwoPointProblem) -> Result<Vec<f64>, CalibError> {
    let pp = problem.base.principal_point();
    let c0 = problem.base.center();
    let x1 = problem.a.pixel - pp;
    let x2 = problem.b.pixel - pp;
    let d1 = (problem.a.world - c0).normalize();
    let d2 = (problem.b.world - c0).normalize();
    focal_candidates(&x1, &x2, &d1, &d2)
}

/// Focal roots for principal-point-centered pixels `x1, x2` whose viewing
/// rays have unit directions `d1, d2`.
pub(crate) fn focal_candidates(
    x1: &Vector2<f64>,
    x2: &Vector2<f64>,
    d1: &Vector3<f64>,
    d2: &Vector3<f64>,
) -> Result<Vec<f64>, CalibError> {
    let sin2 = d1.cross(d2).norm_squared();
    let d = d1.dot(d2);
    let angle = sin2.sqrt().atan2(d);
    if !(MIN_RAY_ANGLE..=std::f64::consts::PI - MIN_RAY_ANGLE).contains(&angle) {
        return Err(CalibError::Degenerate(Degeneracy::CollinearWithCenter));
    }

    let (a, b, c) = (x1.dot(x1), x2.dot(x2), x1.dot(x2));
    let d2sq = d * d;
    let qa = -sin2;
    let qb = d2sq * (a + b) - 2.0 * c;
    let qc = d2sq * a * b - c * c;
    let mut disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        if disc > -1e-12 * qb * qb {
            disc = 0.0;
        } else {
            return Err(CalibError::NoFocalSolution);
        }
    }
    let sq = disc.sqrt();
    // closed-form branch first, the other root second
    let (closed_form, other) = if qb >= 0.0 {
        let q = -(qb + sq) / 2.0;
        (q / qa, if q != 0.0 { qc / q } else { f64::NAN })
    } else {
        let q = -(qb - sq) / 2.0;
        (if q != 0.0 { qc / q } else { f64::NAN }, q / qa)
    };

    let cos_at = |f2: f64| (c + f2) / ((a + f2) * (b + f2)).sqrt();
    let mut out: Vec<f64> = Vec::with_capacity(2);
    for f2 in [closed_form, other] {
        if !(f2.is_finite() && f2 > 0.0) {
            continue;
        }
        if (cos_at(f2) - d).abs() > 1e-6 {
            continue;
        }
        let f = f2.sqrt();
        if out.iter().all(|g| (g - f).abs() > 1e-9 * f) {
            out.push(f);
        }
    }
    if out.is_empty() {
        Err(CalibError::NoFocalSolution)
    } else {
        Ok(out)
    }
}

fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc > -1e-12 * (b * b).max((4.0 * a * c).abs()) {
            disc = 0.0;
        } else {
            return Vec::new();
        }
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// Pan/tilt candidates from a single correspondence at a known focal length.
///
/// With `(X, Y, Z) = S (P - C)` and `(U, V, 1) = K^-1 p`, the constraint
/// `(U, V, 1) ~ Q_tilt Q_pan (X, Y, Z)` gives a quadratic in `t = tan(pan)`:
/// `a t^2 + b t + c = 0` with `a = (V^2+1) Z^2 - U^2 (X^2+Y^2)`,
/// `b = -2XZ (U^2+V^2+1)`, `c = (V^2+1) X^2 - U^2 (Y^2+Z^2)`. Tilt then
/// follows from the 2x2 linear system in `(cos tilt, sin tilt)`.
///
/// Each candidate is checked by forward projection; candidates off by more
/// than 1e-3 px are dropped. Survivors are sorted by reprojection error.
pub fn pan_tilt_from_one_point(
    base: &CameraBase,
    focal_length: f64,
    corr: &Correspondence,
) -> Result<Vec<PtzParams>, CalibError> {
    if !(focal_length.is_finite() && focal_length > 0.0) {
        return Err(CalibError::InvalidFocalLength(focal_length));
    }
    let w = base.to_base_frame(&corr.world);
    let (x, y, z) = (w.x, w.y, w.z);
    if x * x + z * z <= 1e-18 * w.norm_squared() || w.norm() <= 1e-12 {
        return Err(CalibError::Degenerate(Degeneracy::PointOnPanAxis));
    }
    let pp = base.principal_point();
    let u = (corr.pixel.x - pp.x) / focal_length;
    let v = (corr.pixel.y - pp.y) / focal_length;

    let qa = (v * v + 1.0) * z * z - u * u * (x * x + y * y);
    let qb = -2.0 * x * z * (u * u + v * v + 1.0);
    let qc = (v * v + 1.0) * x * x - u * u * (y * y + z * z);

    let mut candidates: Vec<(f64, PtzParams)> = Vec::new();
    for t in solve_quadratic(qa, qb, qc) {
        let pan = t.atan();
        let (sp, cp) = pan.sin_cos();
        let tilt = if u.abs() >= SMALL_U {
            let xp = x * cp - z * sp;
            let det = u * (y * y + (z * cp + x * sp).powi(2));
            let ct = (v * y + x * sp + z * cp) * xp / det;
            let st = (v * x * sp + v * z * cp - y) * xp / det;
            st.atan2(ct)
        } else {
            // (U, V, 1) near the vertical center line: tilt aligns the
            // panned point with the pixel row directly.
            let zp = sp * x + cp * z;
            v.atan() - y.atan2(zp)
        };
        let Ok(ptz) = PtzParams::new(pan.to_degrees(), tilt.to_degrees(), focal_length) else {
            continue;
        };
        let cam = PtzCamera::new(base.clone(), ptz);
        let Some(p) = cam.project_point(&corr.world) else {
            continue;
        };
        let err = (p - corr.pixel).norm();
        if err <= CANDIDATE_TOLERANCE_PX {
            candidates.push((err, ptz));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<PtzParams> = Vec::new();
    for (_, c) in candidates {
        let dup = out
            .iter()
            .any(|o| (o.pan - c.pan).abs() < 1e-9 && (o.tilt - c.tilt).abs() < 1e-9);
        if !dup {
            out.push(c);
        }
    }
    if out.is_empty() {
        Err(CalibError::NoPanTiltSolution)
    } else {
        Ok(out)
    }
}

pub(crate) fn reprojection_residuals(
    base: &CameraBase,
    ptz: &PtzParams,
    correspondences: &[Correspondence],
) -> Option<Vec<f64>> {
    let cam = PtzCamera::new(base.clone(), *ptz);
    let mut r = Vec::with_capacity(correspondences.len() * 2);
    for c in correspondences {
        let p = cam.project_point(&c.world)?;
        r.push(p.x - c.pixel.x);
        r.push(p.y - c.pixel.y);
    }
    Some(r)
}

/// Levenberg-Marquardt refinement of `(pan, tilt, focal)` minimizing the
/// summed squared reprojection error of `correspondences`.
pub fn refine_ptz(
    base: &CameraBase,
    init: PtzParams,
    correspondences: &[Correspondence],
) -> Result<CalibSolution, CalibError> {
    if correspondences.len() < 2 {
        return Err(CalibError::TooFewCorrespondences {
            required: 2,
            got: correspondences.len(),
        });
    }
    let out = lm::minimize(init, |p| reprojection_residuals(base, p, correspondences));
    let rmse = if out.cost.is_finite() {
        (out.cost / correspondences.len() as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(CalibSolution {
        ptz: out.ptz,
        reprojection_rmse: rmse,
        converged: out.converged,
    })
}

/// Full two-point calibration: every focal root crossed with every pan/tilt
/// candidate from the first correspondence, each refined over both points.
/// The lowest-RMSE solution wins.
pub fn calibrate_two_points(problem: &TwoPointProblem) -> Result<CalibSolution, CalibError> {
    let focals = focal_from_two_points(problem)?;
    let pair = [problem.a, problem.b];
    let mut best: Option<CalibSolution> = None;
    let mut last_err = CalibError::CalibrationFailed;
    for f in focals {
        let candidates = match pan_tilt_from_one_point(&problem.base, f, &problem.a) {
            Ok(c) => c,
            Err(e) => {
                last_err = e;
                continue;
            }
        };
        for init in candidates {
            let sol = refine_ptz(&problem.base, init, &pair)?;
            if !sol.reprojection_rmse.is_finite() {
                continue;
            }
            if best.is_none_or(|b| sol.reprojection_rmse < b.reprojection_rmse) {
                best = Some(sol);
            }
        }
    }
    match best {
        Some(b) => Ok(b),
        None if matches!(last_err, CalibError::Degenerate(_)) => Err(last_err),
        None => Err(CalibError::CalibrationFailed),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::camera::{level_rotation, ImageSize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn stadium_base() -> CameraBase {
        let s = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 0.0).into_inner()
            * level_rotation(180.0);
        CameraBase::centered(Vector3::new(115.0, -30.0, 15.0), s, ImageSize::new(1280, 720)).unwrap()
    }

    fn random_ptz(rng: &mut ChaCha8Rng) -> PtzParams {
        PtzParams::new(
            rng.random_range(15.0..75.0),
            rng.random_range(-14.0..-5.0),
            rng.random_range(1500.0..5000.0),
        )
        .unwrap()
    }

    /// Two random correspondences seen by `cam`, at least `min_sep` px apart.
    fn random_pair(rng: &mut ChaCha8Rng, cam: &PtzCamera, min_sep: f64) -> (Correspondence, Correspondence) {
        loop {
            let mut draw = || {
                let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
                let world = cam.base.center() + cam.back_project(&px) * rng.random_range(20.0..250.0);
                Correspondence::new(world, px)
            };
            let a = draw();
            let b = draw();
            if (a.pixel - b.pixel).norm() >= min_sep {
                return (a, b);
            }
        }
    }

    /// All roots of `cos(angle between back-projected pixels at f) = d` on
    /// `[lo, hi]`, located by dense scanning and bisection.
    pub(crate) fn focal_roots_by_search(x1: Vector2<f64>, x2: Vector2<f64>, d: f64, lo: f64, hi: f64) -> Vec<f64> {
        let g = |f: f64| {
            let a = Vector3::new(x1.x, x1.y, f).normalize();
            let b = Vector3::new(x2.x, x2.y, f).normalize();
            a.dot(&b) - d
        };
        let n = 20000;
        let mut roots = Vec::new();
        let step = (hi / lo).ln() / n as f64;
        let mut f0 = lo;
        let mut g0 = g(f0);
        for i in 1..=n {
            let f1 = lo * (step * i as f64).exp();
            let g1 = g(f1);
            if g0 == 0.0 {
                roots.push(f0);
            } else if g0.signum() != g1.signum() {
                let (mut l, mut h, mut gl) = (f0, f1, g0);
                for _ in 0..200 {
                    let m = 0.5 * (l + h);
                    let gm = g(m);
                    if gm.signum() == gl.signum() {
                        l = m;
                        gl = gm;
                    } else {
                        h = m;
                    }
                }
                roots.push(0.5 * (l + h));
            }
            f0 = f1;
            g0 = g1;
        }
        roots
    }

    /// Exhaustive grid search over (pan, tilt) minimizing reprojection error
    /// of one correspondence: a coarse 0.5 degree pass followed by a 0.01
    /// degree pass around the coarse winner.
    pub(crate) fn pan_tilt_by_grid(base: &CameraBase, f: f64, corr: &Correspondence) -> (f64, f64) {
        let err = |pan: f64, tilt: f64| {
            let cam = PtzCamera::new(base.clone(), PtzParams { pan, tilt, focal_length: f });
            cam.project_point(&corr.world)
                .map(|p| (p - corr.pixel).norm())
                .unwrap_or(f64::INFINITY)
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in -179..=179 {
            for j in -179..=179 {
                let (p, t) = (i as f64 * 0.5, j as f64 * 0.5);
                let e = err(p, t);
                if e < best.0 {
                    best = (e, p, t);
                }
            }
        }
        let (p0, t0) = (best.1, best.2);
        let mut fine = (f64::INFINITY, p0, t0);
        for i in -100..=100 {
            for j in -100..=100 {
                let (p, t) = (p0 + i as f64 * 0.01, t0 + j as f64 * 0.01);
                let e = err(p, t);
                if e < fine.0 {
                    fine = (e, p, t);
                }
            }
        }
        (fine.1, fine.2)
    }

    #[test]
    fn focal_recovered_exactly() {
        let base = stadium_base();
        let cam = PtzCamera::new(base.clone(), PtzParams::new(40.0, -9.0, 2000.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let (a, b) = random_pair(&mut rng, &cam, 30.0);
            let problem = TwoPointProblem::new(base.clone(), a, b).unwrap();
            let fs = focal_from_two_points(&problem).unwrap();
            assert!(fs.iter().any(|f| (f - 2000.0).abs() < 2000.0 * 1e-6), "{fs:?}");
        }
    }

    #[test]
    fn symmetric_pair_matches_search_oracle() {
        // x2 = -x1 so a = b and c = -a
        let base = stadium_base();
        let cam = PtzCamera::new(base.clone(), PtzParams::new(30.0, -10.0, 3300.0).unwrap());
        let pp = *base.principal_point();
        let offset = Vector2::new(250.0, -90.0);
        let a = Correspondence::new(cam.base.center() + cam.back_project(&(pp + offset)) * 80.0, pp + offset);
        let b = Correspondence::new(cam.base.center() + cam.back_project(&(pp - offset)) * 60.0, pp - offset);
        let problem = TwoPointProblem::new(base.clone(), a, b).unwrap();
        let fs = focal_from_two_points(&problem).unwrap();
        let da = (a.world - base.center()).normalize();
        let db = (b.world - base.center()).normalize();
        let roots = focal_roots_by_search(offset, -offset, da.dot(&db), 100.0, 20000.0);
        assert_eq!(roots.len(), 1);
        assert!((fs[0] - roots[0]).abs() < 1e-6, "{} vs {}", fs[0], roots[0]);
        assert!((fs[0] - 3300.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_root_identity_and_angle_consistency() {
        let base = stadium_base();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..300 {
            let cam = PtzCamera::new(base.clone(), random_ptz(&mut rng));
            let (a, b) = random_pair(&mut rng, &cam, 20.0);
            let problem = TwoPointProblem::new(base.clone(), a, b).unwrap();
            let pp = base.principal_point();
            let (x1, x2) = (a.pixel - pp, b.pixel - pp);
            let (aa, bb, cc) = (x1.dot(&x1), x2.dot(&x2), x1.dot(&x2));
            let d = (a.world - base.center()).normalize().dot(&(b.world - base.center()).normalize());
            let coeffs = [d * d - 1.0, d * d * (aa + bb) - 2.0 * cc, d * d * aa * bb - cc * cc];
            let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            for f in focal_from_two_points(&problem).unwrap() {
                let f2 = f * f;
                let resid = coeffs[0] * f2 * f2 + coeffs[1] * f2 + coeffs[2];
                assert!(resid.abs() < 1e-6 * scale, "{resid} vs {scale}");
                // cos alpha through the image of the absolute conic w = K^-T K^-1
                let k_inv = nalgebra::Matrix3::new(1.0 / f, 0.0, 0.0, 0.0, 1.0 / f, 0.0, 0.0, 0.0, 1.0);
                let omega = k_inv.transpose() * k_inv;
                let h1 = Vector3::new(x1.x, x1.y, 1.0);
                let h2 = Vector3::new(x2.x, x2.y, 1.0);
                let cos = h1.dot(&(omega * h2))
                    / (h1.dot(&(omega * h1)).sqrt() * h2.dot(&(omega * h2)).sqrt());
                assert!((cos - d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coincident_pixels_rejected() {
        let base = stadium_base();
        let px = Vector2::new(600.0, 300.0);
        let a = Correspondence::new(Vector3::new(10.0, 10.0, 0.0), px);
        let b = Correspondence::new(Vector3::new(20.0, 10.0, 0.0), px + Vector2::new(1e-8, 0.0));
        assert_eq!(
            TwoPointProblem::new(base, a, b),
            Err(CalibError::Degenerate(Degeneracy::CoincidentPixels))
        );
    }

    #[test]
    fn collinear_with_center_rejected() {
        let base = stadium_base();
        let c = *base.center();
        let dir = (Vector3::new(50.0, 30.0, 0.0) - c).normalize();
        let a = Correspondence::new(c + dir * 50.0, Vector2::new(600.0, 300.0));
        let b = Correspondence::new(c + dir * 90.0, Vector2::new(700.0, 320.0));
        let problem = TwoPointProblem::new(base, a, b).unwrap();
        assert_eq!(
            calibrate_two_points(&problem),
            Err(CalibError::Degenerate(Degeneracy::CollinearWithCenter))
        );
    }

    #[test]
    fn pan_tilt_single_point_round_trip() {
        let base = stadium_base();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let truth = random_ptz(&mut rng);
            let cam = PtzCamera::new(base.clone(), truth);
            let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
            let corr = Correspondence::new(cam.base.center() + cam.back_project(&px) * 70.0, px);
            let cands = pan_tilt_from_one_point(&base, truth.focal_length, &corr).unwrap();
            assert!(
                cands.iter().any(|c| (c.pan - truth.pan).abs() < 1e-6 && (c.tilt - truth.tilt).abs() < 1e-6),
                "{truth:?} {cands:?}"
            );
        }
    }

    #[test]
    fn trig_identity_holds_at_solution() {
        let base = stadium_base();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..200 {
            let truth = random_ptz(&mut rng);
            let cam = PtzCamera::new(base.clone(), truth);
            let px = Vector2::new(rng.random_range(0.0..600.0), rng.random_range(0.0..720.0));
            let world = cam.base.center() + cam.back_project(&px) * 50.0;
            let w = base.to_base_frame(&world);
            let f = truth.focal_length;
            let (u, v) = ((px.x - 640.0) / f, (px.y - 360.0) / f);
            let (sp, cp) = truth.pan.to_radians().sin_cos();
            let xp = w.x * cp - w.z * sp;
            let det = u * (w.y * w.y + (w.z * cp + w.x * sp).powi(2));
            let ct = (v * w.y + w.x * sp + w.z * cp) * xp / det;
            let st = (v * w.x * sp + v * w.z * cp - w.y) * xp / det;
            assert!((ct * ct + st * st - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn principal_point_pixel_gives_direction_angles() {
        let base = stadium_base();
        let world = Vector3::new(40.0, 25.0, 0.0);
        let pp = *base.principal_point();
        let corr = Correspondence::new(world, pp);
        let cands = pan_tilt_from_one_point(&base, 2500.0, &corr).unwrap();
        let ray = crate::ray::Ray::from_direction(&base.to_base_frame(&world));
        assert!((cands[0].pan - ray.pan).abs() < 1e-9);
        assert!((cands[0].tilt - ray.tilt).abs() < 1e-9);
    }

    #[test]
    fn pan_tilt_matches_grid_oracle() {
        let base = stadium_base();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..20 {
            let truth = random_ptz(&mut rng);
            let cam = PtzCamera::new(base.clone(), truth);
            let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
            let corr = Correspondence::new(cam.base.center() + cam.back_project(&px) * 90.0, px);
            let cands = pan_tilt_from_one_point(&base, truth.focal_length, &corr).unwrap();
            let (gp, gt) = pan_tilt_by_grid(&base, truth.focal_length, &corr);
            assert!(
                cands.iter().any(|c| (c.pan - gp).abs() <= 0.01 + 1e-9 && (c.tilt - gt).abs() <= 0.01 + 1e-9),
                "{cands:?} vs grid ({gp}, {gt})"
            );
        }
    }

    #[test]
    fn refine_keeps_optimum() {
        let base = stadium_base();
        let truth = PtzParams::new(52.0, -8.0, 3100.0).unwrap();
        let cam = PtzCamera::new(base.clone(), truth);
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let (a, b) = random_pair(&mut rng, &cam, 100.0);
        let sol = refine_ptz(&base, truth, &[a, b]).unwrap();
        assert!(sol.converged);
        assert!(sol.reprojection_rmse < 1e-9);
        assert!((sol.ptz.pan - truth.pan).abs() < 1e-9);
        assert!((sol.ptz.focal_length - truth.focal_length).abs() < 1e-6);
    }

    #[test]
    fn refine_recovers_from_perturbation() {
        let base = stadium_base();
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..50 {
            let truth = random_ptz(&mut rng);
            let cam = PtzCamera::new(base.clone(), truth);
            let (a, b) = random_pair(&mut rng, &cam, 200.0);
            let init = PtzParams::new(truth.pan + 0.5, truth.tilt + 0.5, truth.focal_length + 50.0).unwrap();
            let sol = refine_ptz(&base, init, &[a, b]).unwrap();
            assert!((sol.ptz.pan - truth.pan).abs() < 1e-6, "{sol:?} {truth:?}");
            assert!((sol.ptz.tilt - truth.tilt).abs() < 1e-6);
            assert!((sol.ptz.focal_length - truth.focal_length).abs() < 1e-3);
        }
    }

    #[test]
    fn refine_with_noise_is_stationary_and_monotone() {
        let base = stadium_base();
        let truth = PtzParams::new(33.0, -11.0, 2400.0).unwrap();
        let cam = PtzCamera::new(base.clone(), truth);
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let corrs: Vec<_> = (0..20)
            .map(|_| {
                let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
                let world = cam.base.center() + cam.back_project(&px) * rng.random_range(30.0..150.0);
                Correspondence::new(world, px + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng)))
            })
            .collect();
        let init_cost = reprojection_residuals(&base, &truth, &corrs).unwrap();
        let init_rmse = (init_cost.iter().map(|v| v * v).sum::<f64>() / 20.0).sqrt();
        let sol = refine_ptz(&base, truth, &corrs).unwrap();
        assert!(sol.reprojection_rmse <= init_rmse);
        let g = lm::gradient(&sol.ptz, |p| reprojection_residuals(&base, p, &corrs)).unwrap();
        assert!(g.norm() < 1e-4, "gradient {g}");
    }

    #[test]
    fn too_few_correspondences() {
        let base = stadium_base();
        let c = Correspondence::new(Vector3::new(1.0, 1.0, 0.0), Vector2::new(1.0, 1.0));
        assert!(matches!(
            refine_ptz(&base, PtzParams::new(0.0, 0.0, 1000.0).unwrap(), &[c]),
            Err(CalibError::TooFewCorrespondences { .. })
        ));
    }

    #[test]
    fn zero_noise_two_point_calibration() {
        let base = stadium_base();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let truth = random_ptz(&mut rng);
            let cam = PtzCamera::new(base.clone(), truth);
            let (a, b) = random_pair(&mut rng, &cam, 50.0);
            let sol = calibrate_two_points(&TwoPointProblem::new(base.clone(), a, b).unwrap()).unwrap();
            assert!((sol.ptz.pan - truth.pan).abs() < 1e-6, "{sol:?} {truth:?}");
            assert!((sol.ptz.tilt - truth.tilt).abs() < 1e-6);
            assert!((sol.ptz.focal_length - truth.focal_length).abs() < 1e-3);
        }
    }

    #[test]
    fn narrow_view_with_two_visible_key_points() {
        // A tight shot near the left penalty area with only two key points
        // inside the frame.
        let base = stadium_base();
        let field = crate::field::FieldModel::default();
        let mark = field.key_point("penalty_mark_left").unwrap().world();
        let arc = field.key_point("penalty_arc_left_top").unwrap().world();
        let mid = (mark + arc) / 2.0;
        let ray = crate::ray::Ray::from_direction(&base.to_base_frame(&mid));
        let visible_at = |f: f64| {
            let cam = PtzCamera::new(base.clone(), PtzParams::new(ray.pan, ray.tilt, f).unwrap());
            field
                .key_points
                .iter()
                .filter(|k| {
                    cam.project_point(&k.world())
                        .is_some_and(|p| base.image_size().contains(&p))
                })
                .cloned()
                .collect::<Vec<_>>()
        };
        // zoom in until exactly two key points remain in view
        let f = (0..400)
            .map(|i| 2000.0 + 50.0 * i as f64)
            .find(|&f| visible_at(f).len() == 2)
            .expect("some zoom shows exactly two key points");
        let visible = visible_at(f);
        let truth = PtzParams::new(ray.pan, ray.tilt, f).unwrap();
        let cam = PtzCamera::new(base.clone(), truth);
        let corr: Vec<_> = visible
            .iter()
            .map(|k| Correspondence::new(k.world(), cam.project_point(&k.world()).unwrap()))
            .collect();
        let sol = calibrate_two_points(&TwoPointProblem::new(base, corr[0], corr[1]).unwrap()).unwrap();
        assert!((sol.ptz.pan - truth.pan).abs() < 1e-6);
        assert!((sol.ptz.focal_length - truth.focal_length).abs() < 1e-3);
    }
}
