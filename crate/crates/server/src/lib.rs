//! HTTP front end of the enhancement engine.
//!
//! Weights and table sets are loaded once and cached by path. Streaming
//! sessions keep the reference window of one video between frame requests.
//! Compute runs on the blocking pool.

mod cache;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::Serialize;
use stlut_api::*;
use stlut_core::bench::{bench, BenchConfig};
use stlut_core::enhance::build_all_luts;
use stlut_core::error::StreamError;
use stlut_core::metrics::compare_streams;
use stlut_core::stream::{Sidecar, StreamHeader};
use stlut_core::{
    enhance_stream, init_store, Engine, EngineConfig, Error, Init, LutSpec, Model, Plane, StreamEnhancer, WeightStore,
};

pub use cache::ModelCache;

const BODY_LIMIT: usize = 64 << 20;
const MAX_SESSIONS: usize = 32;

struct Session {
    enhancer: StreamEnhancer,
    width: usize,
    height: usize,
}

#[derive(Clone, Default)]
pub struct AppState {
    cache: Arc<ModelCache>,
    sessions: Arc<Mutex<HashMap<String, Arc<Mutex<Session>>>>>,
}

impl AppState {
    pub fn new(cache: ModelCache) -> Self {
        Self {
            cache: Arc::new(cache),
            sessions: Arc::default(),
        }
    }

    fn engine(&self, weights: &Path, luts: Option<&Path>) -> stlut_core::Result<Engine> {
        let model = self.cache.model(weights)?;
        let luts = luts.map(|d| self.cache.luts(d)).transpose()?;
        Ok(Engine::new(model, luts))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/weights/init", post(init_weights))
        .route("/v1/build-luts", post(build_luts))
        .route("/v1/enhance", post(enhance))
        .route("/v1/metrics", post(metrics))
        .route("/v1/bench", post(bench_stream))
        .route("/v1/sessions", post(open_session))
        .route("/v1/sessions/{id}", axum::routing::delete(close_session))
        .route("/v1/sessions/{id}/frames", post(session_frame))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Error reply: `{"kind": ..., "message": ...}`.
#[derive(Debug)]
pub struct Failure {
    status: StatusCode,
    body: ApiError,
}

impl Failure {
    fn new(status: StatusCode, kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiError {
                kind,
                message: message.into(),
            },
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, ErrorKind::Usage, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = ErrorKind::from(e.class());
        let status = match kind {
            ErrorKind::Usage => StatusCode::BAD_REQUEST,
            ErrorKind::Data | ErrorKind::Numeric => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, kind, e.to_string())
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type Reply<T> = Result<Json<T>, Failure>;

async fn blocking<T, F>(f: F) -> Reply<T>
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, Failure> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json),
        Err(e) => Err(internal(&e)),
    }
}

fn internal(e: &tokio::task::JoinError) -> Failure {
    tracing::error!("worker failed: {e}");
    Failure::new(
        StatusCode::INTERNAL_SERVER_ERROR,
        ErrorKind::Numeric,
        "internal error while processing the request",
    )
}

fn require_absolute(paths: &[&Path]) -> Result<(), Failure> {
    match paths.iter().find(|p| !p.is_absolute()) {
        Some(p) => Err(Failure::usage(format!("path `{}` must be absolute", p.display()))),
        None => Ok(()),
    }
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        sessions: state.sessions.lock().expect("sessions lock").len(),
    })
}

async fn init_weights(Json(req): Json<InitWeightsRequest>) -> Reply<InitWeightsResponse> {
    require_absolute(&[&req.out])?;
    blocking(move || {
        let init = if req.zero { Init::Zero } else { Init::Random { seed: req.seed } };
        let store = init_store(init);
        store.save(&req.out)?;
        let bytes = std::fs::metadata(&req.out).map_err(|e| Error::io(&req.out, e))?.len();
        Ok(InitWeightsResponse {
            path: req.out,
            tensors: store.len(),
            bytes,
        })
    })
    .await
}

async fn build_luts(Json(req): Json<BuildLutsRequest>) -> Reply<BuildLutsResponse> {
    require_absolute(&[&req.weights, &req.out])?;
    blocking(move || {
        let spec = |kind: LutKind, interval: Option<u32>| match interval {
            Some(i) => LutSpec::for_kind(kind, i),
            None => Ok(LutSpec::default_for(kind)),
        };
        let specs = [
            spec(LutKind::S, req.interval_s)?,
            spec(LutKind::T1, req.interval_t1)?,
            spec(LutKind::T2, req.interval_t2)?,
        ];
        let model = Model::from_store(&WeightStore::load(&req.weights)?)?;
        let start = Instant::now();
        let set = build_all_luts(&model.enh, specs)?;
        std::fs::create_dir_all(&req.out).map_err(|e| Error::io(&req.out, e))?;
        let written = set.save_dir(&req.out)?;
        let seconds = start.elapsed().as_secs_f64();
        let files: Vec<LutFile> = written
            .into_iter()
            .map(|(kind, path)| {
                let s = set.get(kind).spec();
                LutFile {
                    kind,
                    path,
                    dims: s.dims,
                    interval: s.interval,
                    entries: s.entries() as u64,
                    bytes: set.get(kind).byte_size(),
                }
            })
            .collect();
        tracing::info!("built tables in {}", req.out.display());
        Ok(BuildLutsResponse {
            total_bytes: files.iter().map(|f| f.bytes).sum(),
            files,
            seconds,
        })
    })
    .await
}

async fn enhance(State(state): State<AppState>, Json(req): Json<EnhanceRequest>) -> Reply<EnhanceResponse> {
    require_absolute(&[&req.input, &req.sidecar, &req.weights, &req.out])?;
    if let Some(l) = &req.luts {
        require_absolute(&[l])?;
    }
    let config = engine_config(req.window, req.direct, req.luts.as_deref())?;
    blocking(move || {
        let start = Instant::now();
        let luts = if req.direct { None } else { req.luts.as_deref() };
        let engine = state.engine(&req.weights, luts)?;
        let summary = enhance_stream(&req.input, &req.sidecar, &req.out, &engine, config)?;
        tracing::info!("enhanced {} frames into {}", summary.steps.len(), req.out.display());
        Ok(EnhanceResponse {
            out: req.out,
            frames: summary.steps.len(),
            width: summary.header.width,
            height: summary.header.height,
            mode: config.mode,
            future_reads: summary.future_reads(),
            peak_cache_bytes: summary.peak_cache_bytes,
            seconds: start.elapsed().as_secs_f64(),
        })
    })
    .await
}

fn engine_config(window: Option<usize>, direct: bool, luts: Option<&Path>) -> Result<EngineConfig, Failure> {
    if !direct && luts.is_none() {
        return Err(Failure::usage("a LUT directory is required unless the direct path is selected"));
    }
    let window = window.unwrap_or(stlut_core::propagation::DEFAULT_WINDOW);
    if window == 0 {
        return Err(Failure::usage("window must be positive"));
    }
    Ok(EngineConfig {
        window,
        mode: if direct { Mode::Direct } else { Mode::Lut },
    })
}

fn metrics_header(req: &MetricsRequest) -> Result<StreamHeader, Failure> {
    match (&req.sidecar, &req.size) {
        (Some(side), _) => Ok(Sidecar::load(side)?.header),
        (None, Some(size)) => {
            let probe = StreamHeader::from_size(size, 1)?;
            let len = std::fs::metadata(&req.reference)
                .map_err(|e| Error::io(&req.reference, e))?
                .len();
            let frame = probe.frame_bytes() as u64;
            if len == 0 || len % frame != 0 {
                return Err(Error::from(StreamError::SizeMismatch {
                    expected: (len / frame).max(1) * frame,
                    actual: len,
                })
                .into());
            }
            Ok(StreamHeader::from_size(size, (len / frame) as usize)?)
        }
        (None, None) => Err(Failure::usage("metrics needs a sidecar or a frame size")),
    }
}

async fn metrics(Json(req): Json<MetricsRequest>) -> Reply<MetricsReport> {
    require_absolute(&[&req.reference, &req.test])?;
    if let Some(s) = &req.sidecar {
        require_absolute(&[s])?;
    }
    blocking(move || {
        let header = metrics_header(&req)?;
        Ok(compare_streams(&req.reference, &req.test, header)?)
    })
    .await
}

async fn bench_stream(State(state): State<AppState>, Json(req): Json<BenchRequest>) -> Reply<BenchReport> {
    require_absolute(&[&req.input, &req.sidecar, &req.weights, &req.luts])?;
    let defaults = BenchConfig::default();
    let config = BenchConfig {
        fps: req.fps.unwrap_or(defaults.fps),
        warmup: req.warmup.unwrap_or(defaults.warmup),
        window: req.window.unwrap_or(defaults.window),
        compare_direct: req.compare_direct,
    };
    if !(config.fps.is_finite() && config.fps > 0.0) {
        return Err(Failure::usage("fps must be positive"));
    }
    if config.window == 0 {
        return Err(Failure::usage("window must be positive"));
    }
    blocking(move || {
        let engine = state.engine(&req.weights, Some(&req.luts))?;
        Ok(bench(&req.input, &req.sidecar, &engine, config)?)
    })
    .await
}

async fn open_session(State(state): State<AppState>, Json(req): Json<SessionRequest>) -> Reply<SessionCreated> {
    require_absolute(&[&req.weights])?;
    if let Some(l) = &req.luts {
        require_absolute(&[l])?;
    }
    StreamHeader::new(req.width, req.height, 1)?;
    let config = engine_config(req.window, req.direct, req.luts.as_deref())?;
    if state.sessions.lock().expect("sessions lock").len() >= MAX_SESSIONS {
        return Err(Failure::new(
            StatusCode::SERVICE_UNAVAILABLE,
            ErrorKind::Usage,
            format!("session limit of {MAX_SESSIONS} reached"),
        ));
    }
    let st = state.clone();
    let built = tokio::task::spawn_blocking(move || -> Result<Session, Failure> {
        let luts = if req.direct { None } else { req.luts.as_deref() };
        let enhancer = st.engine(&req.weights, luts)?.stream(config)?;
        Ok(Session {
            enhancer,
            width: req.width,
            height: req.height,
        })
    })
    .await
    .map_err(|e| internal(&e))??;
    let id = uuid::Uuid::new_v4().to_string();
    state
        .sessions
        .lock()
        .expect("sessions lock")
        .insert(id.clone(), Arc::new(Mutex::new(built)));
    tracing::info!("opened session {id}");
    Ok(Json(SessionCreated { id }))
}

fn find_session(state: &AppState, id: &str) -> Result<Arc<Mutex<Session>>, Failure> {
    state
        .sessions
        .lock()
        .expect("sessions lock")
        .get(id)
        .cloned()
        .ok_or_else(|| Failure::new(StatusCode::NOT_FOUND, ErrorKind::Usage, format!("no session `{id}`")))
}

async fn session_frame(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<FrameRequest>,
) -> Reply<FrameResponse> {
    let session = find_session(&state, &id)?;
    let bytes = B64
        .decode(req.y.as_bytes())
        .map_err(|e| Failure::usage(format!("luma is not valid base64: {e}")))?;
    blocking(move || {
        let mut s = session.lock().expect("session lock");
        let plane = Plane::from_u8(s.height, s.width, &bytes).map_err(|_| {
            Error::from(StreamError::SizeMismatch {
                expected: (s.width * s.height) as u64,
                actual: bytes.len() as u64,
            })
        })?;
        let out = s.enhancer.enhance_frame(&plane, req.qp)?;
        Ok(FrameResponse {
            frame_index: out.frame_index,
            y: B64.encode(out.y.to_u8()),
            refs: out.refs,
            times: out.times,
        })
    })
    .await
}

async fn close_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Reply<SessionClosed> {
    let session = find_session(&state, &id)?;
    state.sessions.lock().expect("sessions lock").remove(&id);
    let frames = session.lock().expect("session lock").enhancer.frames_done();
    tracing::info!("closed session {id} after {frames} frames");
    Ok(Json(SessionClosed { id, frames }))
}
