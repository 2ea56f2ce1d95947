//! Request and response payloads, and the calibration logic behind each
//! endpoint. Numbers are serialized in their shortest round-trip form.

use axum::http::StatusCode;
use nalgebra::Vector2;
use ptzcal_core::camera::{BaseRecord, CameraBase, PtzCamera, PtzParams};
use ptzcal_core::descriptor::{detect_keypoints, patch_descriptor, GrayImage};
use ptzcal_core::forest::{Descriptor, PanTiltForest};
use ptzcal_core::metrics::compute_iou;
use ptzcal_core::overlay::{render_field_overlay, OverlayPolyline, DEFAULT_SAMPLE_STEP};
use ptzcal_core::pose::{calibrate_image, PoseError, RansacConfig};
use ptzcal_core::two_point::calibrate_two_points;
use ptzcal_core::{CalibError, CalibSolution, Correspondence, FieldModel, TwoPointProblem};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ApiError, ErrorCode};

/// Decoded images larger than this are rejected.
pub const MAX_IMAGE_BYTES: usize = 16 * 1024 * 1024;

/// Patch radius used when extracting keypoints from a session image.
pub const PATCH_RADIUS: u32 = 8;
pub const DEFAULT_MAX_KEYPOINTS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    /// Base64 of a binary (P5) 8-bit PGM file.
    PgmBase64(String),
    /// Marking render of a PTZ state drawn from the seed.
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub base: BaseRecord,
    /// Defaults to the field model the service was started with.
    #[serde(default)]
    pub field: Option<FieldModel>,
    #[serde(default)]
    pub image: Option<ImageSource>,
    /// Known PTZ state of the image, used to score estimates.
    #[serde(default)]
    pub ground_truth: Option<PtzParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub ground_truth: Option<PtzParams>,
}

/// A field key point clicked at an image location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationPoint {
    pub key_point: String,
    pub pixel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateRequest {
    pub points: Vec<AnnotationPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionPayload {
    pub pan: f64,
    pub tilt: f64,
    pub focal_length: f64,
    pub reprojection_rmse: f64,
    pub converged: bool,
}

impl From<&CalibSolution> for SolutionPayload {
    fn from(s: &CalibSolution) -> Self {
        Self {
            pan: s.ptz.pan,
            tilt: s.ptz.tilt,
            focal_length: s.ptz.focal_length,
            reprojection_rmse: s.reprojection_rmse,
            converged: s.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateResponse {
    pub solution: SolutionPayload,
    pub overlay: Vec<OverlayPolyline>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointPayload {
    pub pixel: [f64; 2],
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AutoCalibrateRequest {
    #[serde(default)]
    pub keypoints: Vec<KeypointPayload>,
    /// Detect keypoints in the session image instead.
    #[serde(default)]
    pub extract_from_image: bool,
    #[serde(default)]
    pub max_keypoints: Option<usize>,
    #[serde(default)]
    pub ransac: Option<RansacConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatePayload {
    pub pan: f64,
    pub tilt: f64,
    pub focal_length: f64,
    pub inlier_count: usize,
    pub inlier_indices: Vec<usize>,
    pub reprojection_rmse: f64,
    pub iterations_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoCalibrateResponse {
    pub estimate: EstimatePayload,
    pub overlay: Vec<OverlayPolyline>,
    /// IoU against the session ground truth, when one is known.
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayQuery {
    pub pan: f64,
    pub tilt: f64,
    pub focal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayResponse {
    pub ptz: PtzParams,
    pub polylines: Vec<OverlayPolyline>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub base: BaseRecord,
    pub field: FieldModel,
    pub has_image: bool,
    pub ground_truth: Option<PtzParams>,
    pub annotation: Vec<AnnotationPoint>,
    pub last_solution: Option<SolutionPayload>,
}

fn calib_error(e: CalibError) -> ApiError {
    match e {
        CalibError::Degenerate(d) => ApiError::unprocessable(
            ErrorCode::DegenerateConfiguration,
            format!("degenerate configuration: {d}"),
        )
        .with_detail(json!({ "precondition": format!("{d:?}") })),
        other => ApiError::unprocessable(ErrorCode::CalibrationFailed, other.to_string()),
    }
}

/// Resolves named key points into correspondences.
pub fn correspondences(field: &FieldModel, points: &[AnnotationPoint]) -> Result<Vec<Correspondence>, ApiError> {
    points
        .iter()
        .map(|p| {
            let kp = field.key_point(&p.key_point).ok_or_else(|| {
                ApiError::unprocessable(ErrorCode::UnknownKeyPoint, format!("unknown key point `{}`", p.key_point))
                    .with_detail(json!({ "key_point": p.key_point }))
            })?;
            Ok(Correspondence::new(kp.world(), Vector2::from(p.pixel)))
        })
        .collect()
}

/// Two-point calibration of the annotation.
pub fn two_point(base: &CameraBase, field: &FieldModel, points: &[AnnotationPoint]) -> Result<CalibSolution, ApiError> {
    if points.len() != 2 {
        return Err(ApiError::unprocessable(
            ErrorCode::WrongPointCount,
            format!("expected exactly two points, got {}", points.len()),
        )
        .with_detail(json!({ "got": points.len() })));
    }
    let c = correspondences(field, points)?;
    let problem = TwoPointProblem::new(base.clone(), c[0], c[1]).map_err(calib_error)?;
    calibrate_two_points(&problem).map_err(calib_error)
}

pub fn overlay(base: &CameraBase, field: &FieldModel, ptz: PtzParams) -> Vec<OverlayPolyline> {
    render_field_overlay(&PtzCamera::new(base.clone(), ptz), field, DEFAULT_SAMPLE_STEP)
}

pub fn calibrate(base: &CameraBase, field: &FieldModel, req: &CalibrateRequest) -> Result<(CalibSolution, CalibrateResponse), ApiError> {
    let sol = two_point(base, field, &req.points)?;
    let response = CalibrateResponse {
        solution: SolutionPayload::from(&sol),
        overlay: overlay(base, field, sol.ptz),
    };
    Ok((sol, response))
}

pub fn overlay_for_query(base: &CameraBase, field: &FieldModel, q: &OverlayQuery) -> Result<OverlayResponse, ApiError> {
    let ptz = PtzParams::new(q.pan, q.tilt, q.focal).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, ErrorCode::InvalidParameters, e.to_string())
            .with_detail(json!({ "pan": q.pan, "tilt": q.tilt, "focal": q.focal }))
    })?;
    Ok(OverlayResponse {
        ptz,
        polylines: overlay(base, field, ptz),
    })
}

fn pose_error(e: PoseError) -> ApiError {
    match e {
        PoseError::TooFewObservations { .. } | PoseError::AllPredictionsGated | PoseError::TooFewGatedPredictions { .. } => {
            ApiError::unprocessable(ErrorCode::TooFewPredictions, e.to_string())
        }
        PoseError::InvalidConfig(m) => ApiError::bad_request(m),
        PoseError::Forest(m) => ApiError::bad_request(m),
        other => ApiError::unprocessable(ErrorCode::PoseEstimationFailed, other.to_string()),
    }
}

/// Keypoints and descriptors detected in an image.
pub fn extract_keypoints(image: &GrayImage, max_keypoints: usize) -> Vec<(Vector2<f64>, Descriptor)> {
    detect_keypoints(image, max_keypoints, 2.0 * PATCH_RADIUS as f64, PATCH_RADIUS as usize + 1)
        .into_iter()
        .filter_map(|p| {
            let d = patch_descriptor(image, &p, PATCH_RADIUS).ok()?;
            (!d.flat).then_some((p, d.descriptor))
        })
        .collect()
}

pub fn auto_calibrate(
    base: &CameraBase,
    field: &FieldModel,
    forest: &PanTiltForest,
    image: Option<&GrayImage>,
    ground_truth: Option<PtzParams>,
    req: &AutoCalibrateRequest,
) -> Result<AutoCalibrateResponse, ApiError> {
    let keypoints: Vec<(Vector2<f64>, Descriptor)> = if req.extract_from_image {
        let image = image.ok_or_else(|| ApiError::unprocessable(ErrorCode::NoImage, "the session has no image"))?;
        extract_keypoints(image, req.max_keypoints.unwrap_or(DEFAULT_MAX_KEYPOINTS))
    } else {
        req.keypoints
            .iter()
            .map(|k| {
                Descriptor::new(k.descriptor.clone())
                    .map(|d| (Vector2::from(k.pixel), d))
                    .map_err(|e| ApiError::bad_request(e.to_string()))
            })
            .collect::<Result<_, _>>()?
    };
    if keypoints.is_empty() {
        return Err(ApiError::unprocessable(ErrorCode::EmptyKeypoints, "no keypoints to calibrate from"));
    }
    if let Some(k) = keypoints.iter().find(|(_, d)| d.len() != forest.dimension()) {
        return Err(ApiError::bad_request(format!(
            "descriptor has {} values, the forest expects {}",
            k.1.len(),
            forest.dimension()
        )));
    }
    let config = req.ransac.unwrap_or_default();
    let est = calibrate_image(base, forest, &keypoints, &config).map_err(pose_error)?;
    let iou = ground_truth.and_then(|gt| {
        compute_iou(&PtzCamera::new(base.clone(), gt), &PtzCamera::new(base.clone(), est.ptz), field).ok()
    });
    Ok(AutoCalibrateResponse {
        estimate: EstimatePayload {
            pan: est.ptz.pan,
            tilt: est.ptz.tilt,
            focal_length: est.ptz.focal_length,
            inlier_count: est.inlier_indices.len(),
            inlier_indices: est.inlier_indices,
            reprojection_rmse: est.reprojection_rmse,
            iterations_used: est.iterations_used,
        },
        overlay: overlay(base, field, est.ptz),
        iou,
    })
}
