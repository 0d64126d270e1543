//! The feedback service:
//!
//! - `POST /api/analyze` takes `{"text", "task"?, "mode"?, "model"?}` and returns the
//!   analysis with the model name added;
//! - `GET /api/models` lists the configured models and the accepted options;
//! - `GET /api/health` reports `ok`, or `degraded` when a model server does not answer.
//!
//! Errors are `{"error": message}` with status 400 (bad request), 503 (model
//! unreachable) or 500. Model calls block, so they run on the blocking thread pool.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use argmine::corpus::{CorpusSplit, IdentityNormalizer, SplitName};
use argmine::inference::{Completer, HttpCompleter, ModelConfig, API_KEY_ENV};
use argmine::pipeline::{analyze, AnalysisResult, AnalyzeError, AnalyzeOptions, ShotSet};
use argmine::prompt::{PromptMode, TaskKind, MAX_SHOTS};
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::args::ServeArgs;
use crate::commands::load_bundle;
use crate::config::{self, ServeFile};
use crate::{mock_completer, Failure, Outcome};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
/// Origins of the UI development server.
pub const DEFAULT_ORIGINS: [&str; 2] = ["http://localhost:5173", "http://127.0.0.1:5173"];

pub enum Backend {
    Http(HttpCompleter),
    Local(Arc<dyn Completer>),
}

pub struct ServedModel {
    pub config: ModelConfig,
    pub backend: Backend,
}

impl ServedModel {
    pub fn new(config: ModelConfig) -> Result<Self, String> {
        let backend = match mock_completer(&config.endpoint, None)? {
            Some(mock) => Backend::Local(mock),
            None => Backend::Http(HttpCompleter::new(config.clone()).map_err(|e| e.to_string())?),
        };
        Ok(Self { config, backend })
    }

    fn completer(&self) -> &dyn Completer {
        match &self.backend {
            Backend::Http(c) => c,
            Backend::Local(c) => c.as_ref(),
        }
    }

    /// Whether the model server answers, and whether it lists this model.
    pub fn probe(&self) -> ModelHealth {
        let (reachable, installed, detail) = match &self.backend {
            Backend::Local(_) => (true, Some(true), None),
            Backend::Http(c) => match c.probe() {
                Ok(names) if names.is_empty() => (true, None, None),
                Ok(names) => (true, Some(names.contains(&self.config.model)), None),
                Err(e) => (false, None, Some(e.to_string())),
            },
        };
        ModelHealth {
            name: self.config.model.clone(),
            endpoint: self.config.endpoint.clone(),
            reachable,
            installed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelHealth {
    pub name: String,
    pub endpoint: String,
    pub reachable: bool,
    /// Whether the server lists the model; unknown when it gives no list.
    pub installed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

pub struct ServeState {
    /// The first model is the default.
    pub models: Vec<ServedModel>,
    pub train: Option<CorpusSplit>,
    pub shots: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeRequest {
    pub text: String,
    #[serde(default)]
    pub task: Option<TaskKind>,
    #[serde(default)]
    pub mode: Option<PromptMode>,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeResponse {
    pub model: String,
    #[serde(flatten)]
    pub result: AnalysisResult,
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl ServeState {
    pub fn new(models: Vec<ServedModel>, train: Option<CorpusSplit>, shots: usize) -> Result<Self, String> {
        if models.is_empty() {
            return Err("no model configured".into());
        }
        if shots > MAX_SHOTS {
            return Err(format!("shots must be between 0 and {MAX_SHOTS}, got {shots}"));
        }
        for task in [TaskKind::Segmentation, TaskKind::TypeAndQuality] {
            ShotSet::from_training(train.as_ref(), task, shots).map_err(|e| e.to_string())?;
        }
        Ok(Self { models, train, shots })
    }

    fn model(&self, name: Option<&str>) -> Result<&ServedModel, ApiError> {
        match name {
            None => Ok(&self.models[0]),
            Some(n) => self
                .models
                .iter()
                .find(|m| m.config.model == n)
                .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, format!("unknown model {n:?}"))),
        }
    }

    /// Runs one analysis; blocks until the model has answered.
    pub fn analyze(&self, request: &AnalyzeRequest) -> Result<AnalyzeResponse, ApiError> {
        let model = self.model(request.model.as_deref())?;
        let defaults = AnalyzeOptions::default();
        let options = AnalyzeOptions {
            task: request.task.unwrap_or(defaults.task),
            mode: request.mode.unwrap_or(defaults.mode),
            transport_retries: model.config.transport_retries,
            ..defaults
        };
        let k = if options.mode == PromptMode::FewShot { self.shots } else { 0 };
        let shots = ShotSet::from_training(self.train.as_ref(), options.task, k)
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        let result = analyze(&request.text, &options, &shots, &IdentityNormalizer, model.completer()).map_err(|e| {
            let status = match e {
                AnalyzeError::EmptyText | AnalyzeError::NotClassification(_) => StatusCode::BAD_REQUEST,
                AnalyzeError::Transport(_) => StatusCode::SERVICE_UNAVAILABLE,
                AnalyzeError::Pipeline(_) => StatusCode::INTERNAL_SERVER_ERROR,
            };
            ApiError(status, e.to_string())
        })?;
        Ok(AnalyzeResponse { model: model.config.model.clone(), result })
    }

    pub fn health(&self) -> serde_json::Value {
        let models: Vec<ModelHealth> = self.models.iter().map(ServedModel::probe).collect();
        let ok = models.iter().all(|m| m.reachable);
        json!({
            "status": if ok { "ok" } else { "degraded" },
            "version": env!("CARGO_PKG_VERSION"),
            "models": models,
        })
    }

    pub fn model_list(&self) -> serde_json::Value {
        let models: Vec<serde_json::Value> = self
            .models
            .iter()
            .map(|m| {
                json!({
                    "name": m.config.model,
                    "endpoint": m.config.endpoint,
                    "api": m.config.api,
                    "mock": matches!(m.backend, Backend::Local(_)),
                })
            })
            .collect();
        json!({
            "default": self.models[0].config.model,
            "models": models,
            "tasks": [TaskKind::TypeOnly, TaskKind::QualityOnly, TaskKind::TypeAndQuality],
            "modes": [PromptMode::FewShot, PromptMode::FineTuned],
            "shots": self.shots,
        })
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn analyze_handler(
    State(state): State<Arc<ServeState>>,
    body: Result<Json<AnalyzeRequest>, JsonRejection>,
) -> Result<Json<AnalyzeResponse>, ApiError> {
    let Json(request) = body.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    blocking(move || state.analyze(&request)).await?.map(Json)
}

async fn health_handler(State(state): State<Arc<ServeState>>) -> Result<Json<serde_json::Value>, ApiError> {
    blocking(move || state.health()).await.map(Json)
}

async fn models_handler(State(state): State<Arc<ServeState>>) -> Json<serde_json::Value> {
    Json(state.model_list())
}

pub fn router(state: Arc<ServeState>, static_dir: Option<PathBuf>, origins: &[String]) -> anyhow::Result<Router> {
    let origins: Vec<HeaderValue> = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).with_context(|| format!("invalid origin {o:?}")))
        .collect::<anyhow::Result<_>>()?;
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let api = Router::new()
        .route("/api/analyze", post(analyze_handler))
        .route("/api/models", get(models_handler))
        .route("/api/health", get(health_handler))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    };
    Ok(app.layer(cors))
}

fn served_models(args: &ServeArgs, file: &ServeFile) -> Vec<ModelConfig> {
    let mut models = file.models.clone();
    if models.is_empty() || args.model.is_some() || args.endpoint.is_some() {
        let mut m = models.first().cloned().unwrap_or_default();
        if let Some(name) = &args.model {
            m.model = name.clone();
        }
        if let Some(endpoint) = &args.endpoint {
            m.endpoint = endpoint.clone();
        }
        models = vec![m];
    }
    let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty());
    for m in &mut models {
        if let Some(api) = args.api {
            m.api = api;
        }
        if key.is_some() {
            m.api_key = key.clone();
        }
    }
    models
}

pub fn serve(args: ServeArgs) -> Result<Outcome, Failure> {
    let file: ServeFile = match &args.config {
        Some(path) => {
            let (mut f, _): (ServeFile, _) = config::load(path).map_err(Failure::usage)?;
            f.corpus = config::rebase(path, f.corpus.take());
            f.static_dir = config::rebase(path, f.static_dir.take());
            f
        }
        None => ServeFile::default(),
    };
    let addr_text = args.addr.clone().or(file.addr.clone()).unwrap_or_else(|| DEFAULT_ADDR.into());
    let addr: SocketAddr =
        addr_text.parse().map_err(|e| Failure::usage(anyhow!("invalid address {addr_text:?}: {e}")))?;
    let models = served_models(&args, &file)
        .into_iter()
        .map(|m| {
            m.validate()?;
            ServedModel::new(m)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::usage(anyhow!(e)))?;
    let train = match args.corpus.clone().or(file.corpus.clone()) {
        Some(path) => {
            let corpus = load_bundle(&path)?;
            corpus.split(file.train_split.unwrap_or(SplitName::Train)).cloned()
        }
        None => None,
    };
    let shots = args.shots.or(file.shots).unwrap_or(0);
    let state = Arc::new(ServeState::new(models, train, shots).map_err(|e| Failure::usage(anyhow!(e)))?);

    for m in &state.models {
        let h = m.probe();
        match (h.reachable, h.installed) {
            (false, _) => log::warn!(
                "model {} at {} is unreachable ({}); /api/health will report degraded",
                h.name,
                h.endpoint,
                h.detail.unwrap_or_default()
            ),
            (true, Some(false)) => log::warn!("{} does not list model {}", h.endpoint, h.name),
            _ => log::info!("model {} at {} is reachable", h.name, h.endpoint),
        }
    }

    let static_dir = args.static_dir.clone().or(file.static_dir.clone());
    if let Some(dir) = &static_dir {
        if !dir.is_dir() {
            return Err(Failure::usage(anyhow!("static directory {} does not exist", dir.display())));
        }
    }
    let mut origins = args.allow_origins.clone();
    origins.extend(file.allow_origins.iter().cloned());
    if origins.is_empty() {
        origins = DEFAULT_ORIGINS.iter().map(|s| s.to_string()).collect();
    }
    let app = router(state.clone(), static_dir, &origins).map_err(Failure::usage)?;

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(Failure::runtime)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::usage(anyhow!("cannot listen on {addr}: {e}")))?;
        println!("serving on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(Failure::runtime)
    })?;
    Ok(Outcome::Success)
}
