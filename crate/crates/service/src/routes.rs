use std::path::Path;

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};
use yoho_core::annotation::{parse_document, validate, AnnotatedImage};
use yoho_core::config::{Profile, RunConfig};

use crate::{AppState, RunState};

/// Largest accepted image upload.
pub const MAX_IMAGE_BYTES: usize = 32 * 1024 * 1024;
const BODY_SLACK: usize = 1024 * 1024;

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn too_large() -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("image exceeds {} MB", MAX_IMAGE_BYTES / (1024 * 1024)),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Routes under `/api`, with CORS for `origin` (any origin when `None`).
pub fn router(state: AppState, origin: Option<&str>) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => cors.allow_origin(o),
        None => cors.allow_origin(Any),
    };
    Router::new()
        .route("/api/runs", get(list_runs).post(create_run))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/mask", get(get_mask))
        .route("/api/runs/{id}/prob", get(get_prob))
        .route("/api/runs/{id}/history", get(get_history))
        .layer(DefaultBodyLimit::max(MAX_IMAGE_BYTES + BODY_SLACK))
        .layer(cors)
        .with_state(state)
}

async fn list_runs(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "runs": state.list() }))
}

struct Upload {
    image: Vec<u8>,
    annotation: String,
    profile: Option<String>,
    config: Option<String>,
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::too_large()
    } else {
        ApiError::new(e.status(), e.body_text())
    }
}

async fn read_upload(mut multipart: Multipart) -> Result<Upload, ApiError> {
    let (mut image, mut annotation, mut profile, mut config) = (None, None, None, None);
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "image" => {
                let bytes = field.bytes().await.map_err(multipart_error)?;
                if bytes.len() > MAX_IMAGE_BYTES {
                    return Err(ApiError::too_large());
                }
                image = Some(bytes.to_vec());
            }
            "annotation" => annotation = Some(field.text().await.map_err(multipart_error)?),
            "profile" => profile = Some(field.text().await.map_err(multipart_error)?),
            "config" => config = Some(field.text().await.map_err(multipart_error)?),
            other => return Err(ApiError::bad_request(format!("unexpected field `{other}`"))),
        }
    }
    Ok(Upload {
        image: image.ok_or_else(|| ApiError::bad_request("missing field `image`"))?,
        annotation: annotation.ok_or_else(|| ApiError::bad_request("missing field `annotation`"))?,
        profile,
        config,
    })
}

async fn create_run(State(state): State<AppState>, multipart: Multipart) -> Result<Response, ApiError> {
    let upload = read_upload(multipart).await?;
    let image = image::load_from_memory(&upload.image)
        .map_err(|e| ApiError::bad_request(format!("cannot decode image: {e}")))?
        .to_rgb8();
    let doc = parse_document(upload.annotation.as_bytes()).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let profile_name = upload.profile.unwrap_or_else(|| "full".into());
    let profile: Profile = profile_name.parse().map_err(|e: yoho_core::config::ConfigError| ApiError::bad_request(e.to_string()))?;
    let overlay: Value = match &upload.config {
        Some(raw) => serde_json::from_str(raw).map_err(|e| ApiError::bad_request(format!("config: {e}")))?,
        None => json!({}),
    };
    let config = RunConfig::from_overlay(&overlay, Some(profile)).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let image_id = Path::new(&doc.image)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "image".into());
    let annotated = AnnotatedImage {
        image,
        rois: doc.rois,
        reverse: doc.reverse,
        samples: doc.samples,
        image_id,
    };
    let report = validate(&annotated);
    if !report.is_valid() {
        return Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            body: serde_json::to_value(&report).expect("report serializes"),
        });
    }
    let rec = state
        .submit(annotated, config, profile_name)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let body = json!({ "run_id": rec.run_id, "warnings": report.warnings });
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

fn find(state: &AppState, id: &str) -> Result<crate::RunRecord, ApiError> {
    state.get(id).ok_or_else(|| ApiError::not_found(format!("unknown run `{id}`")))
}

async fn get_run(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<crate::RunRecord>, ApiError> {
    find(&state, &id).map(Json)
}

async fn serve_file(path: Option<&Path>, content_type: &'static str, what: &str) -> Result<Response, ApiError> {
    let path = path.ok_or_else(|| ApiError::not_found(format!("{what} is not ready")))?;
    let bytes = tokio::fs::read(path)
        .await
        .map_err(|_| ApiError::not_found(format!("{what} is not available")))?;
    Ok(([(header::CONTENT_TYPE, content_type)], Body::from(bytes)).into_response())
}

async fn done_artifact(
    state: &AppState,
    id: &str,
    pick: impl Fn(&crate::Artifacts) -> Option<&std::path::PathBuf>,
    content_type: &'static str,
    what: &str,
) -> Result<Response, ApiError> {
    let rec = find(state, id)?;
    if rec.state != RunState::Done {
        return Err(ApiError::not_found(format!("{what} is not ready")));
    }
    serve_file(pick(&rec.artifacts).map(|p| p.as_path()), content_type, what).await
}

async fn get_mask(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    done_artifact(&state, &id, |a| a.mask.as_ref(), "image/png", "mask").await
}

async fn get_prob(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    done_artifact(&state, &id, |a| a.prob.as_ref(), "image/png", "probability map").await
}

async fn get_history(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    done_artifact(&state, &id, |a| a.history.as_ref(), "text/csv", "history").await
}
