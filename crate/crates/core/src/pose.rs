//! Automatic PTZ estimation from pixel/ray observations.
//!
//! Observations come from the pan-tilt forest: each keypoint pixel gets up
//! to one predicted ray per tree. A two-point RANSAC finds the PTZ state
//! explaining the most pixels, then Levenberg-Marquardt polishes it on the
//! consensus set.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{pan_tilt_from_rotation, CameraBase, PtzParams};
use crate::forest::{Descriptor, ForestError, PanTiltForest};
use crate::lm;
use crate::ray::{project_ray_exact, Ray};
use crate::rng;
use crate::two_point::{focal_candidates, CalibError};

/// Minimal sample size of the PTZ model.
pub const MIN_SET_SIZE: usize = 2;

/// A pixel paired with a predicted ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayObservation {
    pub pixel: Vector2<f64>,
    pub ray: Ray,
    pub feature_distance: f64,
}

impl RayObservation {
    pub fn new(pixel: Vector2<f64>, ray: Ray) -> Self {
        Self { pixel, ray, feature_distance: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub success_probability: f64,
    pub outlier_ratio: f64,
    /// Reprojection distance in pixels below which an observation is an inlier.
    pub inlier_threshold: f64,
    /// Overrides the iteration count derived from the probabilities.
    pub max_iterations: Option<usize>,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            success_probability: 0.99,
            outlier_ratio: 0.5,
            inlier_threshold: 3.0,
            max_iterations: None,
            min_inliers: 8,
            seed: 0,
        }
    }
}

impl RansacConfig {
    fn validate(&self) -> Result<(), PoseError> {
        let bad = |m: &str| Err(PoseError::InvalidConfig(m.to_string()));
        if !(self.success_probability > 0.0 && self.success_probability < 1.0) {
            return bad("success_probability must be in (0, 1)");
        }
        if !(self.outlier_ratio >= 0.0 && self.outlier_ratio < 1.0) {
            return bad("outlier_ratio must be in [0, 1)");
        }
        if !(self.inlier_threshold.is_finite() && self.inlier_threshold > 0.0) {
            return bad("inlier_threshold must be positive");
        }
        if self.max_iterations == Some(0) {
            return bad("max_iterations must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub ptz: PtzParams,
    /// Indices into the observation list, at most one per distinct pixel.
    pub inlier_indices: Vec<usize>,
    pub reprojection_rmse: f64,
    pub iterations_used: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("need at least {required} observations at distinct pixels, got {got}")]
    TooFewObservations { required: usize, got: usize },
    #[error("degenerate observation pair: {0}")]
    Degenerate(String),
    #[error("no hypothesis reached {required} inliers (best had {best})")]
    InsufficientInliers { best: usize, required: usize },
    #[error("feature-distance gating removed every prediction")]
    AllPredictionsGated,
    #[error("only {got} keypoints kept a prediction after gating, need {required}")]
    TooFewGatedPredictions { got: usize, required: usize },
    #[error("invalid RANSAC configuration: {0}")]
    InvalidConfig(String),
    #[error("forest error: {0}")]
    Forest(String),
}

impl From<ForestError> for PoseError {
    fn from(e: ForestError) -> Self {
        PoseError::Forest(e.to_string())
    }
}

fn iterations_for(p: f64, outlier_ratio: f64, s: usize) -> usize {
    let w = (1.0 - outlier_ratio).powi(s as i32);
    if w >= 1.0 {
        return 1;
    }
    if w <= 0.0 {
        return usize::MAX;
    }
    let n = ((1.0 - p).ln() / (1.0 - w).ln()).round();
    if n.is_finite() {
        (n as usize).max(1)
    } else {
        usize::MAX
    }
}

/// RANSAC iteration count `round(log(1 - p) / log(1 - (1 - e)^s))`.
pub fn ransac_iterations(min_set_size: usize, config: &RansacConfig) -> usize {
    assert!(min_set_size >= 1, "minimal set size must be positive");
    iterations_for(config.success_probability, config.outlier_ratio, min_set_size)
}

fn reprojection_error(ptz: &PtzParams, pp: &Vector2<f64>, obs: &RayObservation) -> f64 {
    project_ray_exact(ptz, pp, &obs.ray)
        .map(|p| (p - obs.pixel).norm())
        .unwrap_or(f64::INFINITY)
}

/// Rotation taking base-frame directions `d1, d2` onto camera-frame
/// directions `m1, m2`, built from the bisector and normal of each pair.
fn rotation_from_pairs(
    d1: &nalgebra::Vector3<f64>,
    d2: &nalgebra::Vector3<f64>,
    m1: &nalgebra::Vector3<f64>,
    m2: &nalgebra::Vector3<f64>,
) -> Option<Matrix3<f64>> {
    let frame = |a: &nalgebra::Vector3<f64>, b: &nalgebra::Vector3<f64>| {
        let e1 = (a + b).try_normalize(1e-12)?;
        let e2 = a.cross(b).try_normalize(1e-12)?;
        let e3 = e1.cross(&e2);
        Some(Matrix3::from_columns(&[e1, e2, e3]))
    };
    Some(frame(m1, m2)? * frame(d1, d2)?.transpose())
}

/// PTZ state from two observations, exact for noise-free inputs.
///
/// The focal length follows from matching the angle between the two rays
/// with the angle between the back-projected pixels. The rotation then
/// aligns both rays with their pixels and yields pan and tilt. When two
/// focal roots exist the one reprojecting both observations best wins.
pub fn fit_ptz_minimal(
    base: &CameraBase,
    a: &RayObservation,
    b: &RayObservation,
) -> Result<PtzParams, PoseError> {
    if (a.pixel - b.pixel).norm() <= 1e-6 {
        return Err(PoseError::Degenerate("pixels coincide".into()));
    }
    let pp = base.principal_point();
    let (x1, x2) = (a.pixel - pp, b.pixel - pp);
    let (d1, d2) = (a.ray.direction(), b.ray.direction());
    let focals = focal_candidates(&x1, &x2, &d1, &d2).map_err(|e| match e {
        CalibError::Degenerate(_) => PoseError::Degenerate("rays are (anti)parallel".into()),
        other => PoseError::Degenerate(other.to_string()),
    })?;
    let mut best: Option<(f64, PtzParams)> = None;
    for f in focals {
        let m1 = nalgebra::Vector3::new(x1.x, x1.y, f).normalize();
        let m2 = nalgebra::Vector3::new(x2.x, x2.y, f).normalize();
        let Some(r) = rotation_from_pairs(&d1, &d2, &m1, &m2) else {
            continue;
        };
        let (pan, tilt) = pan_tilt_from_rotation(&r);
        let Ok(ptz) = PtzParams::new(pan, tilt, f) else {
            continue;
        };
        let err = reprojection_error(&ptz, pp, a).max(reprojection_error(&ptz, pp, b));
        if best.is_none_or(|(e, _)| err < e) {
            best = Some((err, ptz));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| PoseError::Degenerate("no focal root yields a valid rotation".into()))
}

/// Distinct-pixel groups: observations sharing a pixel are alternatives.
fn pixel_groups(observations: &[RayObservation]) -> (Vec<usize>, usize) {
    let mut keys: Vec<(u64, u64)> = Vec::new();
    let mut group_of = Vec::with_capacity(observations.len());
    for o in observations {
        let key = (o.pixel.x.to_bits(), o.pixel.y.to_bits());
        let g = match keys.iter().position(|k| *k == key) {
            Some(g) => g,
            None => {
                keys.push(key);
                keys.len() - 1
            }
        };
        group_of.push(g);
    }
    (group_of, keys.len())
}

/// Per-group best inlier under `ptz`: the selected observation indices and
/// their squared errors.
fn consensus(
    ptz: &PtzParams,
    pp: &Vector2<f64>,
    observations: &[RayObservation],
    group_of: &[usize],
    group_count: usize,
    threshold: f64,
) -> Vec<(usize, f64)> {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; group_count];
    for (i, o) in observations.iter().enumerate() {
        let e = reprojection_error(ptz, pp, o);
        if e <= threshold {
            let slot = &mut best[group_of[i]];
            if slot.is_none_or(|(_, be)| e < be) {
                *slot = Some((i, e));
            }
        }
    }
    best.into_iter().flatten().map(|(i, e)| (i, e * e)).collect()
}

fn score(inliers: &[(usize, f64)]) -> (usize, f64) {
    let n = inliers.len();
    let rmse = if n == 0 {
        f64::INFINITY
    } else {
        (inliers.iter().map(|(_, e2)| e2).sum::<f64>() / n as f64).sqrt()
    };
    (n, rmse)
}

fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn refine_on(
    ptz: PtzParams,
    pp: &Vector2<f64>,
    observations: &[RayObservation],
    subset: &[(usize, f64)],
) -> PtzParams {
    if subset.len() < MIN_SET_SIZE {
        return ptz;
    }
    let out = lm::minimize(ptz, |p| {
        let mut r = Vec::with_capacity(subset.len() * 2);
        for (i, _) in subset {
            let o = &observations[*i];
            let q = project_ray_exact(p, pp, &o.ray)?;
            r.push(q.x - o.pixel.x);
            r.push(q.y - o.pixel.y);
        }
        Some(r)
    });
    PtzParams::new(out.ptz.pan, out.ptz.tilt, out.ptz.focal_length).unwrap_or(out.ptz)
}

/// Two-point RANSAC with local refinement.
///
/// Pairs are drawn from distinct pixels; each hypothesis is scored by the
/// number of pixels with some observation reprojecting within the inlier
/// threshold, ties broken by RMSE. The iteration budget shrinks adaptively
/// as the observed inlier ratio rises. The winner is refined on its
/// inliers, the inliers are re-classified and the model refined again.
pub fn estimate_pose(
    base: &CameraBase,
    observations: &[RayObservation],
    config: &RansacConfig,
    init_hint: Option<PtzParams>,
) -> Result<PoseEstimate, PoseError> {
    config.validate()?;
    let (group_of, group_count) = pixel_groups(observations);
    if group_count < MIN_SET_SIZE {
        return Err(PoseError::TooFewObservations {
            required: MIN_SET_SIZE,
            got: group_count,
        });
    }
    let pp = base.principal_point();
    let threshold = config.inlier_threshold;
    let budget = config
        .max_iterations
        .unwrap_or_else(|| ransac_iterations(MIN_SET_SIZE, config));

    let mut best: Option<(PtzParams, (usize, f64))> = None;
    if let Some(hint) = init_hint {
        let s = score(&consensus(&hint, pp, observations, &group_of, group_count, threshold));
        best = Some((hint, s));
    }

    let n = observations.len();
    let mut required = budget;
    let mut iterations = 0;
    while iterations < required.min(budget) {
        let mut rng = rng::stream(config.seed, &[iterations as u64]);
        iterations += 1;
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n);
        let mut attempts = 0;
        while group_of[j] == group_of[i] && attempts < 64 {
            j = rng.random_range(0..n);
            attempts += 1;
        }
        if group_of[j] == group_of[i] {
            continue;
        }
        let Ok(hyp) = fit_ptz_minimal(base, &observations[i], &observations[j]) else {
            continue;
        };
        let s = score(&consensus(&hyp, pp, observations, &group_of, group_count, threshold));
        if best.is_none_or(|(_, bs)| better(s, bs)) {
            best = Some((hyp, s));
            let inlier_ratio = s.0 as f64 / group_count as f64;
            required = iterations_for(config.success_probability, 1.0 - inlier_ratio, MIN_SET_SIZE);
        }
    }

    let Some((mut ptz, best_score)) = best else {
        return Err(PoseError::InsufficientInliers {
            best: 0,
            required: config.min_inliers.max(MIN_SET_SIZE),
        });
    };
    let required_inliers = config.min_inliers.max(MIN_SET_SIZE);
    if best_score.0 < MIN_SET_SIZE {
        return Err(PoseError::InsufficientInliers {
            best: best_score.0,
            required: required_inliers,
        });
    }

    for _ in 0..2 {
        let set = consensus(&ptz, pp, observations, &group_of, group_count, threshold);
        let refined = refine_on(ptz, pp, observations, &set);
        let new_set = consensus(&refined, pp, observations, &group_of, group_count, threshold);
        if !better(score(&set), score(&new_set)) {
            ptz = refined;
        }
    }

    let final_set = consensus(&ptz, pp, observations, &group_of, group_count, threshold);
    let (count, rmse) = score(&final_set);
    if count < required_inliers {
        return Err(PoseError::InsufficientInliers {
            best: count,
            required: required_inliers,
        });
    }
    let mut inlier_indices: Vec<usize> = final_set.iter().map(|(i, _)| *i).collect();
    inlier_indices.sort_unstable();
    Ok(PoseEstimate {
        ptz,
        inlier_indices,
        reprojection_rmse: rmse,
        iterations_used: iterations,
    })
}

/// Forest predictions for every keypoint, one observation per kept tree vote.
pub fn observations_from_forest(
    forest: &PanTiltForest,
    keypoints: &[(Vector2<f64>, Descriptor)],
) -> Result<Vec<RayObservation>, PoseError> {
    let mut out = Vec::new();
    for (pixel, d) in keypoints {
        for p in forest.predict_ray(d)? {
            out.push(RayObservation {
                pixel: *pixel,
                ray: p.ray,
                feature_distance: p.feature_distance,
            });
        }
    }
    Ok(out)
}

/// Calibrates an image from its keypoints: forest prediction, gating and
/// RANSAC pose estimation.
pub fn calibrate_image(
    base: &CameraBase,
    forest: &PanTiltForest,
    keypoints: &[(Vector2<f64>, Descriptor)],
    config: &RansacConfig,
) -> Result<PoseEstimate, PoseError> {
    if keypoints.len() < MIN_SET_SIZE {
        return Err(PoseError::TooFewObservations {
            required: MIN_SET_SIZE,
            got: keypoints.len(),
        });
    }
    let observations = observations_from_forest(forest, keypoints)?;
    if observations.is_empty() {
        return Err(PoseError::AllPredictionsGated);
    }
    let (_, groups) = pixel_groups(&observations);
    if groups < MIN_SET_SIZE {
        return Err(PoseError::TooFewGatedPredictions {
            got: groups,
            required: MIN_SET_SIZE,
        });
    }
    estimate_pose(base, &observations, config, None)
}

/// One `x,y,pan,tilt,feature_distance` row per observation.
pub fn format_observations(observations: &[RayObservation]) -> String {
    let mut s = String::from("x,y,pan,tilt,feature_distance\n");
    for o in observations {
        let _ = writeln!(
            s,
            "{:.12},{:.12},{:.12},{:.12},{:.12}",
            o.pixel.x, o.pixel.y, o.ray.pan, o.ray.tilt, o.feature_distance
        );
    }
    s
}
