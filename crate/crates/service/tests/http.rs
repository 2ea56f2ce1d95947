//! HTTP-level tests of the calibration service.

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nalgebra::Vector2;
use ptzcal_core::camera::{BaseRecord, CameraBase, PtzCamera, PtzParams};
use ptzcal_core::overlay::{render_field_overlay, DEFAULT_SAMPLE_STEP};
use ptzcal_core::two_point::calibrate_two_points;
use ptzcal_core::{Correspondence, FieldModel, TwoPointProblem};
use ptzcal_service::api::*;
use ptzcal_service::error::{ErrorBody, ErrorCode};
use ptzcal_service::session::SessionStore;
use ptzcal_service::{router, AppState};
use ptzcal_synth::forest_experiment::{forest_scene, query_view, train_experiment_forest};
use ptzcal_synth::{default_base, ExperimentConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(forest: Option<ptzcal_core::forest::PanTiltForest>) -> Router {
    router(AppState::new(SessionStore::in_memory(), forest, FieldModel::default()))
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn error_code(v: &Value) -> ErrorCode {
    serde_json::from_value::<ErrorBody>(v.clone()).unwrap().code
}

fn base_json(base: &CameraBase) -> Value {
    serde_json::to_value(BaseRecord::from(base)).unwrap()
}

async fn new_session(app: &Router, extra: Value) -> String {
    let mut body = json!({ "base": base_json(&default_base()) });
    if let (Value::Object(b), Value::Object(e)) = (&mut body, extra) {
        b.extend(e);
    }
    let (status, v) = send(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

/// Ground truth and two visible key points as annotation pairs.
fn exact_annotation() -> (PtzParams, Vec<AnnotationPoint>) {
    let field = FieldModel::default();
    let gt = PtzParams::new(40.0, -9.0, 1800.0).unwrap();
    let cam = PtzCamera::new(default_base(), gt);
    let visible: Vec<AnnotationPoint> = field
        .key_points
        .iter()
        .filter_map(|k| {
            let p = cam.project_point(&k.world())?;
            cam.base.image_size().contains(&p).then(|| AnnotationPoint {
                key_point: k.name.clone(),
                pixel: [p.x, p.y],
            })
        })
        .collect();
    assert!(visible.len() >= 2);
    (gt, vec![visible[0].clone(), visible[visible.len() - 1].clone()])
}

#[tokio::test]
async fn create_returns_distinct_ids() {
    let app = app(None);
    let a = new_session(&app, json!({})).await;
    let b = new_session(&app, json!({})).await;
    assert_ne!(a, b);
    let (status, v) = send(&app, "GET", &format!("/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["session_id"], a);
    assert_eq!(v["has_image"], false);
}

#[tokio::test]
async fn non_orthonormal_base_is_rejected() {
    let app = app(None);
    let mut base = base_json(&default_base());
    base["rotation"][0] = json!(2.0);
    let (status, v) = send(&app, "POST", "/sessions", Some(json!({ "base": base }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), ErrorCode::InvalidPayload);
    assert!(v["message"].as_str().unwrap().contains("orthonormal"), "{v}");
}

#[tokio::test]
async fn malformed_json_is_a_bad_request() {
    let app = app(None);
    let req = Request::builder()
        .method("POST")
        .uri("/sessions")
        .header("content-type", "application/json")
        .body(Body::from("{\"base\": "))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(error_code(&v), ErrorCode::InvalidPayload);
}

#[tokio::test]
async fn calibrate_matches_the_solver_exactly() {
    let app = app(None);
    let id = new_session(&app, json!({})).await;
    let (gt, points) = exact_annotation();
    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/calibrate"), Some(json!({ "points": points }))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let resp: CalibrateResponse = serde_json::from_value(v).unwrap();

    let field = FieldModel::default();
    let corr = |p: &AnnotationPoint| Correspondence::new(field.key_point(&p.key_point).unwrap().world(), Vector2::from(p.pixel));
    let problem = TwoPointProblem::new(default_base(), corr(&points[0]), corr(&points[1])).unwrap();
    let direct = calibrate_two_points(&problem).unwrap();
    assert_eq!(resp.solution, SolutionPayload::from(&direct));
    assert!((resp.solution.pan - gt.pan).abs() < 1e-6);
    assert!((resp.solution.focal_length - gt.focal_length).abs() < 1e-3);
    assert!(resp.solution.reprojection_rmse < 1e-3);

    let expected = render_field_overlay(&PtzCamera::new(default_base(), direct.ptz), &field, DEFAULT_SAMPLE_STEP);
    assert_eq!(resp.overlay, expected);

    let (_, state) = send(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(state["annotation"], json!(points));
    assert_eq!(state["base"], base_json(&default_base()));
}

#[tokio::test]
async fn replayed_calibration_is_identical() {
    let app = app(None);
    let id = new_session(&app, json!({})).await;
    let (_, points) = exact_annotation();
    let body = json!({ "points": points });
    let (_, a) = send(&app, "POST", &format!("/sessions/{id}/calibrate"), Some(body.clone())).await;
    let (_, b) = send(&app, "POST", &format!("/sessions/{id}/calibrate"), Some(body)).await;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[tokio::test]
async fn calibrate_errors() {
    let app = app(None);
    let id = new_session(&app, json!({})).await;
    let (_, points) = exact_annotation();

    let mut same = points.clone();
    same[1].pixel = same[0].pixel;
    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/calibrate"), Some(json!({ "points": same }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&v), ErrorCode::DegenerateConfiguration);
    assert_eq!(v["detail"]["precondition"], "CoincidentPixels");

    let mut unknown = points.clone();
    unknown[1].key_point = "top_of_the_stand".into();
    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/calibrate"), Some(json!({ "points": unknown }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&v), ErrorCode::UnknownKeyPoint);
    assert_eq!(v["detail"]["key_point"], "top_of_the_stand");
    assert!(v["message"].as_str().unwrap().contains("top_of_the_stand"));

    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/calibrate"), Some(json!({ "points": [points[0]] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&v), ErrorCode::WrongPointCount);

    let (status, v) = send(&app, "POST", "/sessions/nope/calibrate", Some(json!({ "points": points }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), ErrorCode::SessionNotFound);
}

#[tokio::test]
async fn overlay_endpoint() {
    let app = app(None);
    let id = new_session(&app, json!({})).await;
    let (status, v) = send(&app, "GET", &format!("/sessions/{id}/overlay?pan=40&tilt=-9&focal=1800"), None).await;
    assert_eq!(status, StatusCode::OK);
    let resp: OverlayResponse = serde_json::from_value(v).unwrap();
    let cam = PtzCamera::new(default_base(), PtzParams::new(40.0, -9.0, 1800.0).unwrap());
    assert_eq!(resp.polylines, render_field_overlay(&cam, &FieldModel::default(), DEFAULT_SAMPLE_STEP));
    assert!(!resp.polylines.is_empty());

    let (_, at0) = send(&app, "GET", &format!("/sessions/{id}/overlay?pan=0&tilt=-9&focal=1800"), None).await;
    let (_, at360) = send(&app, "GET", &format!("/sessions/{id}/overlay?pan=360&tilt=-9&focal=1800"), None).await;
    assert_eq!(at0["polylines"], at360["polylines"]);

    for q in ["pan=0&tilt=0&focal=0", "pan=0&tilt=0&focal=-5", "pan=0&tilt=0", "pan=x&tilt=0&focal=100"] {
        let (status, v) = send(&app, "GET", &format!("/sessions/{id}/overlay?{q}"), None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{q}");
        assert_eq!(error_code(&v), ErrorCode::InvalidParameters, "{q}");
    }
}

#[tokio::test]
async fn auto_calibrate_without_forest_conflicts() {
    let app = app(None);
    let id = new_session(&app, json!({})).await;
    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/auto-calibrate"), Some(json!({ "keypoints": [] }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_code(&v), ErrorCode::NoForest);
}

fn small_forest_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.forest.bank_size = 2500;
    c.forest.reference_poses = 12;
    c
}

#[tokio::test]
async fn auto_calibrate_held_out_view() {
    let cfg = small_forest_config();
    let scene = forest_scene(&cfg);
    let forest = train_experiment_forest(&scene, &cfg).unwrap();
    let app = app(Some(forest));
    let view = query_view(&scene, &cfg, 0);
    let id = new_session(&app, json!({ "ground_truth": view.ptz })).await;

    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/auto-calibrate"), Some(json!({ "keypoints": [] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&v), ErrorCode::EmptyKeypoints);

    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/auto-calibrate"), Some(json!({ "extract_from_image": true }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&v), ErrorCode::NoImage);

    let keypoints: Vec<KeypointPayload> = view
        .keypoints
        .iter()
        .map(|(p, d)| KeypointPayload {
            pixel: [p.x, p.y],
            descriptor: d.values().to_vec(),
        })
        .collect();
    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/auto-calibrate"), Some(json!({ "keypoints": keypoints }))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let resp: AutoCalibrateResponse = serde_json::from_value(v).unwrap();
    assert!(resp.iou.unwrap() > 0.9, "{:?}", resp.iou);
    assert!(resp.estimate.inlier_count >= 8);
    assert!(!resp.overlay.is_empty());

    let junk: Vec<KeypointPayload> = (0..3)
        .map(|i| KeypointPayload {
            pixel: [10.0 * i as f64, 5.0],
            descriptor: vec![100.0; 128],
        })
        .collect();
    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/auto-calibrate"), Some(json!({ "keypoints": junk }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&v), ErrorCode::TooFewPredictions);

    let short = vec![KeypointPayload {
        pixel: [1.0, 1.0],
        descriptor: vec![0.0; 3],
    }];
    let (status, _) = send(&app, "POST", &format!("/sessions/{id}/auto-calibrate"), Some(json!({ "keypoints": short }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn synthetic_render_session() {
    let app = app(None);
    let id = new_session(&app, json!({ "image": { "synthetic": { "seed": 5 } } })).await;
    let (_, v) = send(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["has_image"], true);
    let gt: PtzParams = serde_json::from_value(v["ground_truth"].clone()).unwrap();
    assert_eq!(gt, ptzcal_service::render::synthetic_ptz(5));
}

#[tokio::test]
async fn pgm_upload_and_bad_images() {
    use base64::Engine;
    let app = app(None);
    let img = ptzcal_core::descriptor::GrayImage::from_fn(16, 8, |x, y| (x * 7 + y) as u8).unwrap();
    let b64 = base64::engine::general_purpose::STANDARD.encode(img.to_pgm());
    let id = new_session(&app, json!({ "image": { "pgm_base64": b64 } })).await;
    let (_, v) = send(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["has_image"], true);

    let bad = base64::engine::general_purpose::STANDARD.encode(b"P2\n1 1\n255\n0");
    let body = json!({ "base": base_json(&default_base()), "image": { "pgm_base64": bad } });
    let (status, v) = send(&app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), ErrorCode::InvalidPayload);
}

#[tokio::test]
async fn field_endpoint_serves_the_model() {
    let app = app(None);
    let (status, v) = send(&app, "GET", "/field", None).await;
    assert_eq!(status, StatusCode::OK);
    let field: FieldModel = serde_json::from_value(v).unwrap();
    assert_eq!(field, FieldModel::default());
}
