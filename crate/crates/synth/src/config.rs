//! Experiment configuration, read from TOML.

use ptzcal_core::forest::ForestConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("i/o error reading config: {0}")]
    Io(String),
}

/// Settings shared by the sweeps and the forest experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Pan range of the random test cameras, degrees.
    pub pan_range: [f64; 2],
    pub tilt_range: [f64; 2],
    /// Focal length range, pixels.
    pub focal_range: [f64; 2],
    /// Pixel noise levels of the feature-location sweep.
    pub noise_levels: Vec<f64>,
    /// Standard deviations of the camera-center perturbation, meters.
    pub location_levels: Vec<f64>,
    /// Standard deviations of the base-rotation perturbation, degrees.
    pub rotation_levels: Vec<f64>,
    pub cameras_count: usize,
    pub trials_per_camera: usize,
    /// Rays sampled in each view.
    pub rays_per_view: usize,
    pub fraction_off_field: f64,
    /// Lower bound of the RANSAC inlier threshold; the sweep uses
    /// `max(min_inlier_threshold, 3 sigma)`.
    pub min_inlier_threshold: f64,
    /// Pixel noise of the base-uncertainty sweeps.
    pub base_pixel_noise: f64,
    pub forest: ForestExperimentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pan_range: [15.0, 75.0],
            tilt_range: [-14.0, -5.0],
            focal_range: [1500.0, 5000.0],
            noise_levels: vec![0.5, 1.0, 2.0, 3.0],
            location_levels: vec![0.1, 0.25, 0.5, 1.0],
            rotation_levels: vec![0.05, 0.1, 0.5, 1.0],
            cameras_count: 20,
            trials_per_camera: 20,
            rays_per_view: 200,
            fraction_off_field: 0.9,
            min_inlier_threshold: 3.0,
            base_pixel_noise: 0.0,
            forest: ForestExperimentConfig::default(),
        }
    }
}

/// Settings of the forest training and automatic-calibration experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestExperimentConfig {
    /// Number of fixed world rays with a stable appearance.
    pub bank_size: usize,
    pub reference_poses: usize,
    /// Focal range of the reference (training) images.
    pub reference_focal_range: [f64; 2],
    pub held_out_poses: usize,
    pub descriptor_dim: usize,
    /// Appearance noise added to every descriptor.
    pub appearance_noise: f64,
    pub training_outlier_prob: f64,
    pub query_outlier_prob: f64,
    /// Keypoint location noise, pixels.
    pub pixel_noise: f64,
    /// A prediction is correct below this angular error, degrees.
    pub inlier_angle_deg: f64,
    pub inlier_threshold: f64,
    /// Focal range of the field-of-view report queries.
    pub fov_focal_range: [f64; 2],
    pub fov_queries: usize,
    pub trees: ForestConfig,
}

impl Default for ForestExperimentConfig {
    fn default() -> Self {
        Self {
            bank_size: 4000,
            reference_poses: 20,
            reference_focal_range: [1500.0, 2500.0],
            held_out_poses: 50,
            descriptor_dim: 128,
            appearance_noise: 0.1,
            training_outlier_prob: 0.0,
            query_outlier_prob: 0.5,
            pixel_noise: 0.5,
            inlier_angle_deg: 0.5,
            inlier_threshold: 3.0,
            fov_focal_range: [1000.0, 5000.0],
            fov_queries: 100,
            trees: ForestConfig::default(),
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<(), ConfigError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
        return Err(ConfigError::Invalid(format!("{name} must be a non-empty [low, high] range")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// The full-size sweep: 100 cameras with 100 trials each.
    pub fn full_scale(mut self) -> Self {
        self.cameras_count = 100;
        self.trials_per_camera = 100;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check_range("pan_range", self.pan_range)?;
        check_range("tilt_range", self.tilt_range)?;
        check_range("focal_range", self.focal_range)?;
        check_range("forest.reference_focal_range", self.forest.reference_focal_range)?;
        check_range("forest.fov_focal_range", self.forest.fov_focal_range)?;
        if self.focal_range[0] <= 0.0 || self.forest.reference_focal_range[0] <= 0.0 || self.forest.fov_focal_range[0] <= 0.0 {
            return Err(ConfigError::Invalid("focal ranges must be positive".into()));
        }
        if self.cameras_count == 0 || self.trials_per_camera == 0 {
            return Err(ConfigError::Invalid("cameras_count and trials_per_camera must be positive".into()));
        }
        if self.rays_per_view < 2 {
            return Err(ConfigError::Invalid("rays_per_view must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.fraction_off_field) {
            return Err(ConfigError::Invalid("fraction_off_field must be in [0, 1]".into()));
        }
        let mut levels = self
            .noise_levels
            .iter()
            .chain(&self.location_levels)
            .chain(&self.rotation_levels)
            .chain(std::iter::once(&self.base_pixel_noise));
        if levels.any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ConfigError::Invalid("noise and perturbation levels must be non-negative".into()));
        }
        let f = &self.forest;
        if f.bank_size == 0 || f.reference_poses == 0 || f.descriptor_dim == 0 {
            return Err(ConfigError::Invalid("forest bank, reference poses and descriptor dim must be positive".into()));
        }
        for p in [f.training_outlier_prob, f.query_outlier_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Invalid("outlier probabilities must be in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
