//! Calibration toolkit for pan-tilt-zoom sports cameras with a known base.
//!
//! - [`camera`], [`ray`], [`field`], [`overlay`]: camera model, ray
//!   parameterization, soccer field model and marking overlays.
//! - [`two_point`]: focal length from two points, pan/tilt from one point,
//!   Levenberg-Marquardt refinement.
//! - [`forest`]: regression forest from patch descriptors to rays.
//! - [`pose`]: two-point RANSAC over predicted rays.
//! - [`metrics`]: top-view IoU and rotation/focal errors.
//! - [`descriptor`]: grayscale images, keypoints and patch descriptors.

pub mod camera;
pub mod descriptor;
pub mod field;
pub mod forest;
pub mod geometry;
pub mod lm;
pub mod metrics;
pub mod overlay;
pub mod pose;
pub mod ray;
pub mod rng;
pub mod two_point;

pub use camera::{CameraBase, CameraError, ImageSize, PtzCamera, PtzParams};
pub use field::FieldModel;
pub use ray::Ray;
pub use two_point::{CalibError, CalibSolution, Correspondence, TwoPointProblem};
