//! HTTP service for interactive PTZ calibration.
//!
//! Endpoints:
//!
//! - `POST /sessions` creates a session from a camera base, an optional
//!   field model and an optional image (PGM upload or synthetic render).
//! - `GET /sessions/{id}` returns the session state.
//! - `POST /sessions/{id}/calibrate` solves two annotated key points and
//!   returns the solution with the projected field overlay.
//! - `POST /sessions/{id}/auto-calibrate` runs forest prediction and
//!   RANSAC on supplied or extracted keypoints.
//! - `GET /sessions/{id}/overlay?pan=&tilt=&focal=` projects the field for
//!   manually chosen parameters.
//! - `GET /field` returns the default field model.
//!
//! Errors are JSON bodies `{code, message, detail}`; see
//! [`error::ErrorCode`].

pub mod api;
pub mod error;
pub mod render;
pub mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use ptzcal_core::camera::{CameraBase, PtzParams};
use ptzcal_core::descriptor::GrayImage;
use ptzcal_core::forest::PanTiltForest;
use ptzcal_core::FieldModel;
use thiserror::Error;

use api::*;
use error::{ApiError, ErrorCode};
use session::{Session, SessionStore};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub forest: Option<Arc<PanTiltForest>>,
    pub field: Arc<FieldModel>,
}

impl AppState {
    pub fn new(store: SessionStore, forest: Option<PanTiltForest>, field: FieldModel) -> Self {
        Self {
            store: Arc::new(store),
            forest: forest.map(Arc::new),
            field: Arc::new(field),
        }
    }
}

/// Request bodies may carry a base64 image of up to 16 MB.
const BODY_LIMIT: usize = MAX_IMAGE_BYTES / 3 * 4 + 1024 * 1024;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/field", get(get_field))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/calibrate", post(calibrate_session))
        .route("/sessions/{id}/auto-calibrate", post(auto_calibrate_session))
        .route("/sessions/{id}/overlay", get(session_overlay))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn get_field(State(state): State<AppState>) -> Json<FieldModel> {
    Json((*state.field).clone())
}

fn decode_image(source: &ImageSource, base: &CameraBase, field: &FieldModel) -> Result<(GrayImage, Option<PtzParams>), ApiError> {
    match source {
        ImageSource::PgmBase64(b64) => {
            if b64.len() / 4 * 3 > MAX_IMAGE_BYTES + 3 {
                return Err(ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, ErrorCode::ImageTooLarge, "images are limited to 16 MB"));
            }
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64)
                .map_err(|e| ApiError::bad_request(format!("image is not valid base64: {e}")))?;
            let image = GrayImage::from_pgm(&bytes).map_err(|e| ApiError::bad_request(format!("image: {e}")))?;
            Ok((image, None))
        }
        ImageSource::Synthetic { seed } => {
            let ptz = render::synthetic_ptz(*seed);
            Ok((render::render(base, field, ptz, *seed), Some(ptz)))
        }
    }
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<CreateSessionResponse>), ApiError> {
    let Json(req) = body?;
    let base = CameraBase::try_from(&req.base).map_err(|e| {
        ApiError::bad_request(format!("invalid camera base: {e}")).with_detail(serde_json::json!({ "field": "base" }))
    })?;
    let field = match req.field {
        Some(f) => {
            f.validate()
                .map_err(|e| ApiError::bad_request(format!("invalid field model: {e}")))?;
            f
        }
        None => (*state.field).clone(),
    };
    if let Some(gt) = req.ground_truth {
        PtzParams::new(gt.pan, gt.tilt, gt.focal_length)
            .map_err(|e| ApiError::bad_request(format!("invalid ground truth: {e}")))?;
    }
    let (image, synthetic_truth) = match &req.image {
        Some(src) => {
            let (img, gt) = decode_image(src, &base, &field)?;
            (Some(img), gt)
        }
        None => (None, None),
    };
    let ground_truth = req.ground_truth.or(synthetic_truth);
    let id = state
        .store
        .create(|id| Session {
            id,
            base,
            field,
            image,
            ground_truth,
            annotation: Vec::new(),
            last_solution: None,
        })
        .await
        .map_err(|e| ApiError::internal(format!("could not persist session: {e}")))?;
    Ok((
        StatusCode::CREATED,
        Json(CreateSessionResponse {
            session_id: id,
            ground_truth,
        }),
    ))
}

async fn session(state: &AppState, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
    state.store.get(id).await.ok_or_else(|| ApiError::session_not_found(id))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let s = session(&state, &id).await?;
    let view = s.lock().await.view();
    Ok(Json(view))
}

async fn calibrate_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<CalibrateRequest>, JsonRejection>,
) -> Result<Json<CalibrateResponse>, ApiError> {
    let s = session(&state, &id).await?;
    let Json(req) = body?;
    let mut guard = s.lock().await;
    let (base, field) = (guard.base.clone(), guard.field.clone());
    let points = req.points.clone();
    let (sol, response) = tokio::task::spawn_blocking(move || calibrate(&base, &field, &req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    guard.annotation = points;
    guard.last_solution = Some(sol);
    state
        .store
        .save(&guard)
        .map_err(|e| ApiError::internal(format!("could not persist session: {e}")))?;
    Ok(Json(response))
}

async fn auto_calibrate_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<AutoCalibrateRequest>, JsonRejection>,
) -> Result<Json<AutoCalibrateResponse>, ApiError> {
    let s = session(&state, &id).await?;
    let Some(forest) = state.forest.clone() else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            ErrorCode::NoForest,
            "no forest loaded; start the service with --forest",
        ));
    };
    let Json(req) = body?;
    let guard = s.lock().await;
    let (base, field, image, gt) = (guard.base.clone(), guard.field.clone(), guard.image.clone(), guard.ground_truth);
    let response = tokio::task::spawn_blocking(move || auto_calibrate(&base, &field, &forest, image.as_ref(), gt, &req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    drop(guard);
    Ok(Json(response))
}

async fn session_overlay(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<OverlayQuery>, QueryRejection>,
) -> Result<Json<OverlayResponse>, ApiError> {
    let s = session(&state, &id).await?;
    let Query(q) = query?;
    let guard = s.lock().await;
    Ok(Json(overlay_for_query(&guard.base, &guard.field, &q)?))
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("field model {path}: {message}")]
    Field { path: PathBuf, message: String },
    #[error("forest {path}: {message}")]
    Forest { path: PathBuf, message: String },
    #[error("session directory {path}: {source}")]
    Persist { path: PathBuf, source: std::io::Error },
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// Startup options of the service.
#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    pub port: u16,
    pub forest: Option<PathBuf>,
    pub field: Option<PathBuf>,
    pub persist: Option<PathBuf>,
}

/// Loads the forest, field model and session store named by the options.
pub fn build_state(opts: &ServiceOptions) -> Result<AppState, ServiceError> {
    let field = match &opts.field {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Field {
                path: path.clone(),
                message: e.to_string(),
            })?;
            FieldModel::from_toml(&text).map_err(|e| ServiceError::Field {
                path: path.clone(),
                message: e.to_string(),
            })?
        }
        None => FieldModel::default(),
    };
    let forest = match &opts.forest {
        Some(path) => Some(PanTiltForest::load(path).map_err(|e| ServiceError::Forest {
            path: path.clone(),
            message: e.to_string(),
        })?),
        None => None,
    };
    let store = match &opts.persist {
        Some(dir) => SessionStore::persistent(dir).map_err(|source| ServiceError::Persist {
            path: dir.clone(),
            source,
        })?,
        None => SessionStore::in_memory(),
    };
    Ok(AppState::new(store, forest, field))
}

/// Serves on `127.0.0.1:port` until interrupted.
pub async fn serve(opts: ServiceOptions) -> Result<(), ServiceError> {
    let state = build_state(&opts)?;
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], opts.port))).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
