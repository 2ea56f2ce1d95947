//! Monte Carlo sweeps over feature-location noise and camera base
//! uncertainty.
//!
//! Every trial draws from an RNG stream keyed by `(camera, trial)`, and all
//! levels of a sweep reuse the same draws, so the curves differ only by the
//! swept quantity. Trials run in parallel and are aggregated in index order.

use nalgebra::{Rotation3, Unit, Vector3};
use ptzcal_core::camera::{CameraBase, PtzParams};
use ptzcal_core::metrics::{evaluate, EvalResult};
use ptzcal_core::pose::{estimate_pose, RansacConfig, RayObservation};
use ptzcal_core::rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::scene::{camera, random_ptz, sample_view, SyntheticScene, ViewRay};

/// Aggregated errors at one sweep level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// The swept quantity: pixels, meters or degrees.
    pub sigma: f64,
    pub mean_rot_err_deg: f64,
    pub std_rot_err_deg: f64,
    pub mean_focal_err_px: f64,
    pub std_focal_err_px: f64,
    pub mean_iou: f64,
    pub fail_count: usize,
}

/// Which part of the camera base is perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMode {
    Location,
    Rotation,
}

/// Ground-truth camera of index `c`.
pub fn sweep_camera(config: &ExperimentConfig, c: usize) -> PtzParams {
    let mut g = rng::stream(config.seed, &[c as u64]);
    random_ptz(config, config.focal_range, &mut g)
}

struct TrialDraw {
    gt: PtzParams,
    view: Vec<ViewRay>,
    unit_noise: Vec<[f64; 2]>,
    ransac_seed: u64,
    rng: rand_chacha::ChaCha8Rng,
}

fn draw_trial(scene: &SyntheticScene, config: &ExperimentConfig, c: usize, t: usize) -> TrialDraw {
    let gt = sweep_camera(config, c);
    let mut g = rng::stream(config.seed, &[c as u64, t as u64]);
    let view = sample_view(&scene.base, &scene.field, &gt, config.rays_per_view, config.fraction_off_field, &mut g);
    let unit_noise = view
        .iter()
        .map(|_| [StandardNormal.sample(&mut g), StandardNormal.sample(&mut g)])
        .collect();
    TrialDraw {
        gt,
        view,
        unit_noise,
        ransac_seed: rng::derive_seed(config.seed, &[c as u64, t as u64, 1]),
        rng: g,
    }
}

fn solve(
    scene: &SyntheticScene,
    estimation_base: &CameraBase,
    gt: &PtzParams,
    observations: &[RayObservation],
    threshold: f64,
    seed: u64,
) -> Option<EvalResult> {
    let cfg = RansacConfig {
        inlier_threshold: threshold,
        seed,
        ..RansacConfig::default()
    };
    let est = estimate_pose(estimation_base, observations, &cfg, None).ok()?;
    evaluate(&camera(&scene.base, *gt), &est.ptz, &scene.field).ok()
}

fn noisy_observations(draw: &TrialDraw, sigma: f64, labels: impl Fn(&ViewRay) -> ptzcal_core::Ray) -> Vec<RayObservation> {
    draw.view
        .iter()
        .zip(&draw.unit_noise)
        .map(|(v, n)| {
            let pixel = v.pixel + sigma * nalgebra::Vector2::new(n[0], n[1]);
            RayObservation::new(pixel, labels(v))
        })
        .collect()
}

fn trial_grid(config: &ExperimentConfig) -> Vec<(usize, usize)> {
    (0..config.cameras_count)
        .flat_map(|c| (0..config.trials_per_camera).map(move |t| (c, t)))
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates per-trial outcomes of one level; `None` counts as a failure.
pub fn aggregate(level: f64, outcomes: &[Option<EvalResult>]) -> SweepRow {
    let ok: Vec<&EvalResult> = outcomes.iter().flatten().collect();
    let rot: Vec<f64> = ok.iter().map(|r| r.rotation_error).collect();
    let focal: Vec<f64> = ok.iter().map(|r| r.focal_error).collect();
    let iou: Vec<f64> = ok.iter().map(|r| r.iou).collect();
    let (mean_rot_err_deg, std_rot_err_deg) = mean_std(&rot);
    let (mean_focal_err_px, std_focal_err_px) = mean_std(&focal);
    SweepRow {
        sigma: level,
        mean_rot_err_deg,
        std_rot_err_deg,
        mean_focal_err_px,
        std_focal_err_px,
        mean_iou: mean_std(&iou).0,
        fail_count: outcomes.len() - ok.len(),
    }
}

fn collect_rows(levels: &[f64], per_trial: Vec<Vec<Option<EvalResult>>>) -> Vec<SweepRow> {
    levels
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let outcomes: Vec<Option<EvalResult>> = per_trial.iter().map(|t| t[k]).collect();
            aggregate(level, &outcomes)
        })
        .collect()
}

/// Feature-location noise sweep: Gaussian pixel noise of each level on
/// exactly labelled rays, solved by two-point RANSAC with an inlier
/// threshold of `max(min_inlier_threshold, 3 sigma)`.
pub fn run_noise_sweep(scene: &SyntheticScene, config: &ExperimentConfig) -> Vec<SweepRow> {
    let per_trial: Vec<Vec<Option<EvalResult>>> = trial_grid(config)
        .into_par_iter()
        .map(|(c, t)| {
            let draw = draw_trial(scene, config, c, t);
            config
                .noise_levels
                .iter()
                .map(|&sigma| {
                    let obs = noisy_observations(&draw, sigma, |v| v.ray);
                    let threshold = config.min_inlier_threshold.max(3.0 * sigma);
                    solve(scene, &scene.base, &draw.gt, &obs, threshold, draw.ransac_seed)
                })
                .collect()
        })
        .collect();
    collect_rows(&config.noise_levels, per_trial)
}

/// Base with its center or mounting rotation perturbed by `level` times
/// the unit draw: a per-axis offset in meters, or a rotation about a random
/// axis by a Gaussian angle in degrees.
pub fn perturb_base(base: &CameraBase, mode: BaseMode, level: f64, unit: &[f64; 3]) -> CameraBase {
    let u = Vector3::from(*unit);
    match mode {
        BaseMode::Location => base.with_center(base.center() + level * u).expect("finite center"),
        BaseMode::Rotation => {
            let n = u.norm();
            if n == 0.0 || level == 0.0 {
                return base.clone();
            }
            // direction uniform on the sphere, angle Gaussian with std `level`
            let axis = Unit::new_normalize(u);
            let r = Rotation3::from_axis_angle(&axis, (level * n / 3f64.sqrt()).to_radians());
            let s = r.into_inner() * base.rotation();
            let s = Rotation3::from_matrix(&s).into_inner();
            base.with_rotation(s).expect("orthonormal rotation")
        }
    }
}

/// Base-uncertainty sweep: labels and estimation use the perturbed base,
/// errors are measured against the unperturbed one.
pub fn run_base_uncertainty_sweep(scene: &SyntheticScene, config: &ExperimentConfig, mode: BaseMode) -> Vec<SweepRow> {
    let levels = match mode {
        BaseMode::Location => &config.location_levels,
        BaseMode::Rotation => &config.rotation_levels,
    };
    let per_trial: Vec<Vec<Option<EvalResult>>> = trial_grid(config)
        .into_par_iter()
        .map(|(c, t)| {
            let mut draw = draw_trial(scene, config, c, t);
            let unit = match mode {
                BaseMode::Location => [
                    StandardNormal.sample(&mut draw.rng),
                    StandardNormal.sample(&mut draw.rng),
                    StandardNormal.sample(&mut draw.rng),
                ],
                BaseMode::Rotation => gaussian_axis_angle(&mut draw.rng),
            };
            levels
                .iter()
                .map(|&level| {
                    let perturbed = perturb_base(&scene.base, mode, level, &unit);
                    let obs = noisy_observations(&draw, config.base_pixel_noise, |v| v.scene.relabel(&scene.base, &perturbed));
                    let threshold = config.min_inlier_threshold.max(3.0 * config.base_pixel_noise);
                    solve(scene, &perturbed, &draw.gt, &obs, threshold, draw.ransac_seed)
                })
                .collect()
        })
        .collect();
    collect_rows(levels, per_trial)
}

/// A vector whose direction is uniform on the sphere and whose norm is
/// `sqrt(3) |z|` for a standard normal `z`, so that [`perturb_base`]
/// rotates by `level * z` degrees.
fn gaussian_axis_angle<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let v = loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if v.norm() > 1e-9 {
            break v.normalize();
        }
    };
    let z: f64 = StandardNormal.sample(rng);
    let v = v * z.abs() * 3f64.sqrt();
    [v.x, v.y, v.z]
}
