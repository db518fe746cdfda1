use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::log::RatingLog;
use crate::study::{Registry, Study};
use crate::{ServiceError, StudyConfig};

const PLACEHOLDER_PAGE: &str = "<!doctype html>\n<meta charset=\"utf-8\">\n<title>Rating service</title>\n\
<p>No UI bundle configured. Set <code>static_dir</code> in the study file.</p>\n";

#[derive(Clone)]
pub struct AppState {
    registry: Arc<Mutex<Registry>>,
}

impl AppState {
    pub fn new(registry: Registry) -> Self {
        AppState { registry: Arc::new(Mutex::new(registry)) }
    }

    /// Loads every image and opens the ratings log.
    pub fn from_config(cfg: &StudyConfig) -> Result<Self, ServiceError> {
        let study = Study::load(cfg)?;
        let log = RatingLog::open(&cfg.ratings_log)?;
        Ok(AppState::new(Registry::new(study, log)))
    }

    fn lock(&self) -> MutexGuard<'_, Registry> {
        // A panic mid-request leaves the registry consistent: the log is
        // written before memory changes.
        self.registry.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownItem(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidScore(_) | ServiceError::MissingSession => StatusCode::BAD_REQUEST,
            ServiceError::Incomplete { .. } => StatusCode::CONFLICT,
            ServiceError::Config(_) | ServiceError::Io(_) | ServiceError::Bind { .. } => {
                tracing::error!("{self}");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RatingBody {
    session_id: String,
    item_id: String,
    score: i64,
}

async fn get_session(State(st): State<AppState>, Query(q): Query<SessionQuery>) -> Result<Response, ServiceError> {
    let mut reg = st.lock();
    let view = match q.session_id {
        Some(id) => reg.session(&id)?,
        None => reg.create_session(),
    };
    Ok(Json(view).into_response())
}

async fn get_image(State(st): State<AppState>, Path(item_id): Path<String>) -> Result<Response, ServiceError> {
    let bytes = st.lock().image(&item_id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes.as_ref().clone()).into_response())
}

async fn post_rating(State(st): State<AppState>, Json(body): Json<RatingBody>) -> Result<StatusCode, ServiceError> {
    st.lock().rate(&body.session_id, &body.item_id, body.score)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_report(State(st): State<AppState>, Query(q): Query<SessionQuery>) -> Result<Response, ServiceError> {
    let id = q.session_id.ok_or(ServiceError::MissingSession)?;
    let report = st.lock().report(&id)?;
    Ok(Json(report).into_response())
}

/// The rating API. Static UI files are served from `static_dir` at `/`.
pub fn router(state: AppState, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/rating", post(post_rating))
        .route("/api/report", get(get_report))
        .route("/images/{item_id}", get(get_image))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, app: Router) -> Result<(), ServiceError> {
    axum::serve(listener, app).await?;
    Ok(())
}

/// Binds `addr` and returns the bound address with a ready-to-serve app.
pub async fn bind(cfg: &StudyConfig, addr: &str) -> Result<(TcpListener, SocketAddr, Router), ServiceError> {
    let state = AppState::from_config(cfg)?;
    let listener = TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind { addr: addr.to_string(), source })?;
    let local = listener.local_addr()?;
    tracing::info!("rating service listening on http://{local}");
    Ok((listener, local, router(state, cfg.static_dir.as_deref())))
}
