//! Read-only HTTP API over a built work directory, plus the MCP bridge.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use lcot_core::gateway::Gateway;
use lcot_core::plato::Article;
use lcot_mcp::{http_router, KnowledgeBase, McpServer, Sandbox, ToolConfig, ToolService};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commands::{self, Knowledge};
use crate::config::Loaded;
use crate::error::{CliError, CliResult, ErrorKind};
use crate::pipeline::{slug, ARTICLES_DIR, TREE_FILE};

pub struct AppState {
    pub loaded: Loaded,
    pub gateway: Gateway,
    pub knowledge: Knowledge,
    pub work_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

pub struct ApiError {
    status: StatusCode,
    envelope: ErrorEnvelope,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            envelope: ErrorEnvelope {
                code: code.into(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.envelope.detail = detail;
        self
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        match e.kind {
            ErrorKind::Empty => ApiError::new(StatusCode::NOT_FOUND, "no_coverage", e.message),
            ErrorKind::Validation => ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.message),
            ErrorKind::Runtime => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.envelope)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
struct SearchParams {
    q: String,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    10
}

async fn search(State(app): State<Arc<AppState>>, Query(p): Query<SearchParams>) -> ApiResult<Value> {
    if p.q.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "query `q` is empty"));
    }
    let query = lcot_core::search::deterministic_expansion(&p.q)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    let hits = app
        .knowledge
        .index
        .search(&query, p.k, &app.loaded.config.articles.search)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    if hits.is_empty() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "no_coverage",
            format!("no coverage for `{}`", p.q),
        ));
    }
    Ok(Json(serde_json::json!({"query": query, "hits": hits})))
}

async fn stored_article(State(app): State<Arc<AppState>>, UrlPath(keyword): UrlPath<String>) -> ApiResult<Article> {
    let path = app.work_dir.join(ARTICLES_DIR).join(format!("{}.json", slug(&keyword)));
    let raw = std::fs::read_to_string(&path).map_err(|_| {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no article for `{keyword}`"))
            .with_detail(serde_json::json!({"hint": "POST /article to write one"}))
    })?;
    serde_json::from_str(&raw)
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

#[derive(Debug, Deserialize)]
struct ArticleRequest {
    keyword: String,
}

async fn write_article(State(app): State<Arc<AppState>>, Json(req): Json<ArticleRequest>) -> ApiResult<Value> {
    if req.keyword.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "`keyword` is empty"));
    }
    let page = tokio::task::spawn_blocking(move || {
        commands::article(&app.loaded, &app.gateway, &app.knowledge, &req.keyword)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(serde_json::to_value(&page).expect("page serializes")))
}

async fn chain(State(app): State<Arc<AppState>>, UrlPath(qa_id): UrlPath<String>) -> ApiResult<Value> {
    let qa = app
        .knowledge
        .store
        .get(&qa_id)
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no record `{qa_id}`")))?;
    Ok(Json(serde_json::to_value(qa).expect("record serializes")))
}

async fn hierarchy(State(app): State<Arc<AppState>>) -> ApiResult<Value> {
    let raw = std::fs::read_to_string(app.work_dir.join(TREE_FILE))
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not_found", "no community hierarchy has been built"))?;
    serde_json::from_str(&raw)
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn api_router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/search", get(search))
        .route("/article/{keyword}", get(stored_article))
        .route("/article", axum::routing::post(write_article))
        .route("/chain/{qa_id}", get(chain))
        .route("/hierarchy", get(hierarchy))
        .with_state(app)
}

pub fn app_state(loaded: &Loaded) -> CliResult<AppState> {
    let work_dir = loaded.work_dir();
    Ok(AppState {
        loaded: loaded.clone(),
        gateway: loaded.config.gateway()?,
        knowledge: Knowledge::open(&work_dir)?,
        work_dir,
    })
}

/// MCP tool server for the `[mcp]` section; articles use the built corpus when present.
pub fn mcp_server(loaded: &Loaded) -> CliResult<McpServer> {
    let section = loaded
        .config
        .mcp
        .as_ref()
        .ok_or_else(|| CliError::validation("config has no [mcp] section"))?;
    let mut tools = ToolConfig::new(&section.author, &section.generator, &section.solver);
    tools.expander_backend = loaded.config.articles.expander.clone();
    tools.categorizer_backend = loaded.config.articles.categorizer.clone();
    if let Some(w) = section.workers {
        tools.workers = w.max(1);
    }
    tools.workflow.k = loaded.config.articles.k;
    tools.workflow.search = loaded.config.articles.search;
    let gateway = Arc::new(loaded.config.gateway()?);
    let sandbox = Arc::new(Sandbox::new(section.sandbox.clone()));
    let mut service = ToolService::new(gateway, tools, sandbox);
    match Knowledge::open(&loaded.work_dir()) {
        Ok(k) => {
            service = service.with_knowledge(KnowledgeBase {
                index: k.index,
                store: k.store,
            })
        }
        Err(e) => tracing::warn!(error = %e, "generate_article disabled"),
    }
    Ok(McpServer::new(service))
}

/// The API routes, `/mcp` when configured, and the JSON 404 fallback.
pub fn router(loaded: &Loaded) -> CliResult<Router> {
    let mut router = api_router(Arc::new(app_state(loaded)?));
    if loaded.config.mcp.is_some() {
        router = router.merge(http_router(Arc::new(mcp_server(loaded)?)));
    }
    Ok(router.fallback(fallback))
}

pub async fn serve(router: Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router).await
}
