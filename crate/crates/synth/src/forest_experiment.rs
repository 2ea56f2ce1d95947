//! Forest experiments on the appearance-oracle stadium: training from
//! calibrated reference views, gated versus ungated prediction quality,
//! end-to-end calibration of held-out views and the field-of-view report.

use std::collections::HashSet;

use nalgebra::Vector2;
use ptzcal_core::camera::{CameraBase, PtzParams};
use ptzcal_core::forest::{label_keypoints, train_forest, Descriptor, ForestError, PanTiltForest, TrainingSample};
use ptzcal_core::metrics::compute_iou;
use ptzcal_core::pose::{calibrate_image, PoseEstimate, PoseError, RansacConfig};
use ptzcal_core::{rng, FieldModel, Ray};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::appearance::{canonical_descriptor, observe, ray_cell};
use crate::config::ExperimentConfig;
use crate::scene::{camera, default_base, random_ptz, scene_ray, visible_pixel, SyntheticScene};

const BANK_KEY: u64 = 0xBA4C;
const REFERENCE_KEY: u64 = 0x4EF;
const QUERY_KEY: u64 = 0x0E4;
const FOV_KEY: u64 = 0xF0F;
const TREE_KEY: u64 = 0x74EE;

/// Upper bound on keypoints extracted from a query view.
pub const MAX_QUERY_KEYPOINTS: usize = 200;

/// An IoU below this counts as a failed calibration.
pub const FAILURE_IOU: f64 = 0.6;

/// A synthetic image reduced to its keypoints, with the ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticView {
    pub ptz: PtzParams,
    pub keypoints: Vec<(Vector2<f64>, Descriptor)>,
    /// True ray of each keypoint.
    pub rays: Vec<Ray>,
}

fn bank_margin(base: &CameraBase, focal: f64) -> f64 {
    let size = base.image_size();
    let half_diag = 0.5 * (size.width as f64).hypot(size.height as f64);
    (half_diag / focal).atan().to_degrees() + 1.0
}

/// Scene whose ray bank covers every view of the experiments: the pan and
/// tilt ranges widened by the half-diagonal field of view at the smallest
/// focal length in use. Bank rays occupy distinct appearance cells.
pub fn forest_scene(config: &ExperimentConfig) -> SyntheticScene {
    let base = default_base();
    let field = FieldModel::default();
    let fc = &config.forest;
    let f_min = config.focal_range[0].min(fc.reference_focal_range[0]).min(fc.fov_focal_range[0]);
    let m = bank_margin(&base, f_min);
    let (p0, p1) = (config.pan_range[0] - m, config.pan_range[1] + m);
    let (t0, t1) = ((config.tilt_range[0] - m).max(-89.0), (config.tilt_range[1] + m).min(89.0));
    let mut g = rng::stream(config.seed, &[BANK_KEY]);
    let mut cells = HashSet::new();
    let mut ray_bank = Vec::with_capacity(fc.bank_size);
    while ray_bank.len() < fc.bank_size {
        let ray = Ray::new(g.random_range(p0..p1), g.random_range(t0..t1));
        if cells.insert(ray_cell(&ray)) {
            ray_bank.push((scene_ray(&base, &field, ray), canonical_descriptor(&ray, fc.descriptor_dim)));
        }
    }
    let off = ray_bank.iter().filter(|(r, _)| !r.is_on_field()).count();
    SyntheticScene {
        fraction_off_field: off as f64 / ray_bank.len() as f64,
        base,
        field,
        ray_bank,
    }
}

/// Keypoints of every bank ray visible in the view: noisy pixel locations
/// and observed descriptors. At most `max_keypoints` are kept, chosen at
/// random.
pub fn render_view<R: Rng + ?Sized>(
    scene: &SyntheticScene,
    ptz: PtzParams,
    pixel_noise: f64,
    appearance_noise: f64,
    outlier_prob: f64,
    max_keypoints: Option<usize>,
    rng: &mut R,
) -> SyntheticView {
    let size = scene.base.image_size();
    let mut visible: Vec<(Vector2<f64>, usize)> = scene
        .ray_bank
        .iter()
        .enumerate()
        .filter_map(|(i, (r, _))| visible_pixel(&scene.base, &ptz, &r.ray).map(|p| (p, i)))
        .collect();
    if let Some(cap) = max_keypoints {
        if visible.len() > cap {
            let mut keep = sample(rng, visible.len(), cap).into_vec();
            keep.sort_unstable();
            visible = keep.into_iter().map(|k| visible[k]).collect();
        }
    }
    let noise = Normal::new(0.0, pixel_noise.max(0.0)).expect("finite noise");
    let mut keypoints = Vec::with_capacity(visible.len());
    let mut rays = Vec::with_capacity(visible.len());
    for (p, i) in visible {
        let (r, d) = &scene.ray_bank[i];
        let mut q = p;
        if pixel_noise > 0.0 {
            q += Vector2::new(noise.sample(rng), noise.sample(rng));
            q.x = q.x.clamp(0.0, size.width as f64);
            q.y = q.y.clamp(0.0, size.height as f64);
        }
        keypoints.push((q, observe(d, appearance_noise, outlier_prob, rng)));
        rays.push(r.ray);
    }
    SyntheticView { ptz, keypoints, rays }
}

/// Reference pose `i` of `n`: pan stratified over the pan range.
pub fn reference_pose(config: &ExperimentConfig, i: usize) -> PtzParams {
    let mut g = rng::stream(config.seed, &[REFERENCE_KEY, i as u64, 0]);
    let n = config.forest.reference_poses as f64;
    let [p0, p1] = config.pan_range;
    let pan = p0 + (i as f64 + g.random::<f64>()) * (p1 - p0) / n;
    let [f0, f1] = config.forest.reference_focal_range;
    PtzParams::new(
        pan,
        g.random_range(config.tilt_range[0]..config.tilt_range[1]),
        g.random_range(f0..f1),
    )
    .expect("validated ranges")
}

/// Labelled samples from all reference views.
pub fn training_samples(scene: &SyntheticScene, config: &ExperimentConfig) -> Vec<TrainingSample> {
    let fc = &config.forest;
    let pp = *scene.base.principal_point();
    let per_view: Vec<Vec<TrainingSample>> = (0..fc.reference_poses)
        .into_par_iter()
        .map(|i| {
            let ptz = reference_pose(config, i);
            let mut g = rng::stream(config.seed, &[REFERENCE_KEY, i as u64, 1]);
            let view = render_view(scene, ptz, fc.pixel_noise, fc.appearance_noise, fc.training_outlier_prob, None, &mut g);
            label_keypoints(&ptz, &pp, &view.keypoints)
        })
        .collect();
    per_view.into_iter().flatten().collect()
}

/// Trains the experiment forest; the tree seed is derived from the
/// experiment seed.
pub fn train_experiment_forest(scene: &SyntheticScene, config: &ExperimentConfig) -> Result<PanTiltForest, ForestError> {
    let mut trees = config.forest.trees;
    trees.seed = rng::derive_seed(config.seed, &[TREE_KEY, trees.seed]);
    train_forest(&training_samples(scene, config), &trees)
}

/// Held-out query view `q`.
pub fn query_view(scene: &SyntheticScene, config: &ExperimentConfig, q: usize) -> SyntheticView {
    let fc = &config.forest;
    let mut g = rng::stream(config.seed, &[QUERY_KEY, q as u64]);
    let ptz = random_ptz(config, config.focal_range, &mut g);
    render_view(scene, ptz, fc.pixel_noise, fc.appearance_noise, fc.query_outlier_prob, Some(MAX_QUERY_KEYPOINTS), &mut g)
}

fn ransac_config(config: &ExperimentConfig, keys: &[u64]) -> RansacConfig {
    RansacConfig {
        inlier_threshold: config.forest.inlier_threshold,
        seed: rng::derive_seed(config.seed, keys),
        ..RansacConfig::default()
    }
}

/// Fractions of per-tree predictions within the inlier angle of the true
/// ray, over all predictions and over those kept by gating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatingRates {
    pub ungated_inlier_rate: f64,
    pub gated_inlier_rate: f64,
    pub ungated_predictions: usize,
    pub gated_predictions: usize,
}

pub fn gating_rates(forest: &PanTiltForest, views: &[SyntheticView], inlier_angle_deg: f64) -> Result<GatingRates, ForestError> {
    let threshold = forest.feature_distance_threshold();
    let (mut all, mut all_ok, mut kept, mut kept_ok) = (0usize, 0usize, 0usize, 0usize);
    for v in views {
        for ((_, d), truth) in v.keypoints.iter().zip(&v.rays) {
            for p in forest.predict_all(d)? {
                let ok = p.ray.angle_to(truth) < inlier_angle_deg;
                all += 1;
                all_ok += ok as usize;
                if p.feature_distance <= threshold {
                    kept += 1;
                    kept_ok += ok as usize;
                }
            }
        }
    }
    let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(GatingRates {
        ungated_inlier_rate: rate(all_ok, all),
        gated_inlier_rate: rate(kept_ok, kept),
        ungated_predictions: all,
        gated_predictions: kept,
    })
}

/// Outcome of calibrating one synthetic view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewOutcome {
    pub ground_truth: PtzParams,
    pub estimate: Option<PtzParams>,
    pub inliers: usize,
    /// Zero when calibration failed.
    pub iou: f64,
    pub fov_deg: f64,
    pub error: Option<String>,
}

impl ViewOutcome {
    pub fn failed(&self) -> bool {
        self.iou < FAILURE_IOU
    }
}

/// Runs `calibrate_image` on a view and scores it by IoU.
pub fn calibrate_view(
    scene: &SyntheticScene,
    forest: &PanTiltForest,
    view: &SyntheticView,
    ransac: &RansacConfig,
) -> ViewOutcome {
    let result: Result<PoseEstimate, PoseError> = calibrate_image(&scene.base, forest, &view.keypoints, ransac);
    let gt = camera(&scene.base, view.ptz);
    let fov_deg = view.ptz.horizontal_fov(scene.base.image_size().width);
    match result {
        Ok(est) => {
            let iou = compute_iou(&gt, &camera(&scene.base, est.ptz), &scene.field);
            ViewOutcome {
                ground_truth: view.ptz,
                estimate: Some(est.ptz),
                inliers: est.inlier_indices.len(),
                iou: iou.as_ref().copied().unwrap_or(0.0),
                fov_deg,
                error: iou.err().map(|e| e.to_string()),
            }
        }
        Err(e) => ViewOutcome {
            ground_truth: view.ptz,
            estimate: None,
            inliers: 0,
            iou: 0.0,
            fov_deg,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestExperimentReport {
    pub training_samples: usize,
    pub feature_distance_threshold: f64,
    pub rates: GatingRates,
    pub mean_iou: f64,
    pub failures: usize,
    pub outcomes: Vec<ViewOutcome>,
}

/// Trains the forest, measures gating and calibrates the held-out views.
pub fn run_forest_experiment(config: &ExperimentConfig) -> Result<ForestExperimentReport, ForestError> {
    let scene = forest_scene(config);
    let samples = training_samples(&scene, config);
    let mut trees = config.forest.trees;
    trees.seed = rng::derive_seed(config.seed, &[TREE_KEY, trees.seed]);
    let forest = train_forest(&samples, &trees)?;
    let views: Vec<SyntheticView> = (0..config.forest.held_out_poses)
        .into_par_iter()
        .map(|q| query_view(&scene, config, q))
        .collect();
    let rates = gating_rates(&forest, &views, config.forest.inlier_angle_deg)?;
    let outcomes: Vec<ViewOutcome> = views
        .par_iter()
        .enumerate()
        .map(|(q, v)| calibrate_view(&scene, &forest, v, &ransac_config(config, &[QUERY_KEY, q as u64])))
        .collect();
    let mean_iou = outcomes.iter().map(|o| o.iou).sum::<f64>() / outcomes.len().max(1) as f64;
    Ok(ForestExperimentReport {
        training_samples: samples.len(),
        feature_distance_threshold: forest.feature_distance_threshold(),
        rates,
        mean_iou,
        failures: outcomes.iter().filter(|o| o.failed()).count(),
        outcomes,
    })
}

/// Calibrates `fov_queries` views with focal lengths drawn from the report
/// range, for an IoU-versus-field-of-view scatter.
pub fn fov_report(scene: &SyntheticScene, forest: &PanTiltForest, config: &ExperimentConfig) -> Vec<ViewOutcome> {
    let fc = &config.forest;
    (0..fc.fov_queries)
        .into_par_iter()
        .map(|q| {
            let mut g = rng::stream(config.seed, &[FOV_KEY, q as u64]);
            let ptz = random_ptz(config, fc.fov_focal_range, &mut g);
            let view = render_view(scene, ptz, fc.pixel_noise, fc.appearance_noise, fc.query_outlier_prob, Some(MAX_QUERY_KEYPOINTS), &mut g);
            calibrate_view(scene, forest, &view, &ransac_config(config, &[FOV_KEY, q as u64]))
        })
        .collect()
}

/// Failures among views wider than `min_fov_deg`.
pub fn failures_above_fov(outcomes: &[ViewOutcome], min_fov_deg: f64) -> usize {
    outcomes.iter().filter(|o| o.fov_deg > min_fov_deg && o.failed()).count()
}
