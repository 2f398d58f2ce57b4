//! HTTP + WebSocket front end for [`netbend_core::Engine`].
//!
//! Endpoints:
//!
//! * `GET  /api/model`: layer list as a JSON array (`X-Latent-Dim` and
//!   `X-Resolution` headers carry the model's latent size and output size)
//! * `GET  /api/activations`: every activation kind with its parameter schema
//! * `POST /api/render`: `{"patches": {...}, "seed": 7, "format": "ppm"}` → image bytes
//! * `GET  /ws`: live channel, see [`live`]

pub mod live;

use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{State, WebSocketUpgrade};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use netbend_core::activation::ActivationKind;
use netbend_core::image::ImageFormat;
use netbend_core::{param_schema, Engine, PatchSet, RenderError, ValidationReport};
use serde::Serialize;
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

pub const DEFAULT_PORT: u16 = 8639;

#[derive(Clone)]
pub struct AppState {
    engine: Engine,
    model_json: Arc<String>,
    catalog_json: Arc<String>,
    pool: Arc<Semaphore>,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self::with_workers(engine, workers)
    }

    pub fn with_workers(engine: Engine, workers: usize) -> Self {
        let catalog: Vec<_> = ActivationKind::ALL.into_iter().map(param_schema).collect();
        Self {
            model_json: Arc::new(engine.graph().layers_json()),
            catalog_json: Arc::new(serde_json::to_string(&catalog).expect("schemas serialize")),
            engine,
            pool: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Renders on the blocking pool, at most `workers` at a time.
    pub async fn render(&self, job: RenderJob) -> Result<Rendered, RenderError> {
        let _permit = self.pool.acquire().await.expect("semaphore never closed");
        let engine = self.engine.clone();
        tokio::task::spawn_blocking(move || {
            let start = Instant::now();
            let bytes = engine.render_bytes(&job.patches, job.seed, job.format)?;
            Ok(Rendered {
                bytes,
                format: job.format,
                render_ms: start.elapsed().as_secs_f64() * 1000.0,
            })
        })
        .await
        .expect("render task panicked")
    }
}

/// A parsed render request.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderJob {
    pub patches: PatchSet,
    pub seed: u64,
    pub format: ImageFormat,
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub bytes: Vec<u8>,
    pub format: ImageFormat,
    pub render_ms: f64,
}

/// A request body the service could not make sense of.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BodyError {
    pub code: String,
    pub message: String,
}

impl BodyError {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// Reads the `patches`, `seed` and `format` fields shared by the HTTP body and
/// live-channel messages. Missing fields default to an empty patch set, seed 0
/// and PPM.
pub fn parse_job(obj: &serde_json::Map<String, Value>) -> Result<RenderJob, BodyError> {
    let patches = match obj.get("patches") {
        None | Some(Value::Null) => PatchSet::default(),
        Some(v) => {
            PatchSet::from_value(v).map_err(|e| BodyError::new(e.code(), e.to_string()))?
        }
    };
    let seed = match obj.get("seed") {
        None | Some(Value::Null) => 0,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| BodyError::new("bad_type", "seed must be an unsigned 64-bit integer"))?,
    };
    let format = match obj.get("format") {
        None | Some(Value::Null) => ImageFormat::Ppm,
        Some(Value::String(s)) => s
            .parse()
            .map_err(|e: String| BodyError::new("bad_format", e))?,
        Some(_) => return Err(BodyError::new("bad_type", "format must be a string")),
    };
    Ok(RenderJob {
        patches,
        seed,
        format,
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/model", get(get_model))
        .route("/api/activations", get(get_activations))
        .route("/api/render", post(post_render))
        .route("/ws", get(ws_upgrade))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, router(state)).await
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn get_model(State(state): State<AppState>) -> Response {
    let graph = state.engine.graph();
    let mut resp = json_response(StatusCode::OK, state.model_json.as_ref().clone());
    let headers = resp.headers_mut();
    headers.insert("x-latent-dim", HeaderValue::from(graph.latent_dim()));
    headers.insert("x-resolution", HeaderValue::from(graph.output_resolution()));
    resp
}

async fn get_activations(State(state): State<AppState>) -> Response {
    json_response(StatusCode::OK, state.catalog_json.as_ref().clone())
}

fn body_error(e: BodyError) -> Response {
    json_response(
        StatusCode::UNPROCESSABLE_ENTITY,
        serde_json::to_string(&e).expect("serializes"),
    )
}

fn validation_error(report: &ValidationReport) -> Response {
    json_response(StatusCode::BAD_REQUEST, report.to_json())
}

async fn post_render(State(state): State<AppState>, body: Bytes) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return body_error(BodyError::new("parse_error", e.to_string())),
    };
    let Some(obj) = value.as_object() else {
        return body_error(BodyError::new("bad_type", "request body must be a JSON object"));
    };
    if let Some(k) = obj
        .keys()
        .find(|k| !["patches", "seed", "format"].contains(&k.as_str()))
    {
        return body_error(BodyError::new("unknown_key", format!("unknown key {k:?}")));
    }
    let job = match parse_job(obj) {
        Ok(job) => job,
        Err(e) => return body_error(e),
    };
    match state.render(job).await {
        Ok(r) => {
            let mut resp = (
                StatusCode::OK,
                [(header::CONTENT_TYPE, r.format.content_type())],
                r.bytes,
            )
                .into_response();
            if let Ok(v) = HeaderValue::from_str(&format!("{:.3}", r.render_ms)) {
                resp.headers_mut().insert("x-render-ms", v);
            }
            resp
        }
        Err(RenderError::Validation(report)) => validation_error(&report),
        Err(e) => json_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            serde_json::to_string(&BodyError::new("render_failed", e.to_string())).unwrap(),
        ),
    }
}

async fn ws_upgrade(State(state): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| live::run_session(socket, state))
}
