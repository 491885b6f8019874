//! JSON-RPC 2.0 message handling shared by the stdio and HTTP transports.

use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};

use crate::tools::{manifest, ToolService};

pub const PROTOCOL_VERSION: &str = "2024-11-05";
pub const SERVER_NAME: &str = "lcot-mcp";

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;

#[derive(Deserialize)]
struct Request<'a> {
    #[serde(default)]
    jsonrpc: Option<String>,
    #[serde(borrow, default)]
    id: Option<&'a RawValue>,
    method: String,
    #[serde(borrow, default)]
    params: Option<&'a RawValue>,
}

#[derive(Deserialize)]
struct CallParams<'a> {
    name: String,
    #[serde(borrow, default)]
    arguments: Option<&'a RawValue>,
}

#[derive(Serialize)]
struct Success<'a> {
    jsonrpc: &'static str,
    id: &'a RawValue,
    result: Value,
}

#[derive(Serialize)]
struct Failure<'a> {
    jsonrpc: &'static str,
    id: &'a RawValue,
    error: ErrorObject,
}

#[derive(Serialize)]
struct ErrorObject {
    code: i64,
    message: String,
}

fn null_id() -> &'static RawValue {
    static NULL: std::sync::OnceLock<Box<RawValue>> = std::sync::OnceLock::new();
    NULL.get_or_init(|| RawValue::from_string("null".into()).expect("null is valid JSON"))
}

fn failure(id: &RawValue, code: i64, message: String) -> String {
    serde_json::to_string(&Failure {
        jsonrpc: "2.0",
        id,
        error: ErrorObject { code, message },
    })
    .expect("error serializes")
}

/// Tool service behind the MCP method set.
pub struct McpServer {
    tools: ToolService,
}

impl McpServer {
    pub fn new(tools: ToolService) -> Self {
        Self { tools }
    }

    pub fn tools(&self) -> &ToolService {
        &self.tools
    }

    /// Handles one message; notifications yield no reply.
    pub fn handle(&self, message: &str) -> Option<String> {
        let request: Request<'_> = match serde_json::from_str(message) {
            Ok(r) => r,
            Err(e) => {
                let code = if serde_json::from_str::<Value>(message).is_ok() {
                    INVALID_REQUEST
                } else {
                    PARSE_ERROR
                };
                return Some(failure(null_id(), code, e.to_string()));
            }
        };
        let id = request.id?;
        if request.jsonrpc.as_deref() != Some("2.0") {
            return Some(failure(id, INVALID_REQUEST, "jsonrpc must be \"2.0\"".into()));
        }
        let outcome = match request.method.as_str() {
            "initialize" => Ok(self.initialize(request.params)),
            "ping" => Ok(json!({})),
            "tools/list" => Ok(json!({ "tools": manifest() })),
            "tools/call" => self.call(request.params),
            other => Err((METHOD_NOT_FOUND, format!("method `{other}` not found"))),
        };
        Some(match outcome {
            Ok(result) => serde_json::to_string(&Success {
                jsonrpc: "2.0",
                id,
                result,
            })
            .expect("result serializes"),
            Err((code, message)) => failure(id, code, message),
        })
    }

    fn initialize(&self, params: Option<&RawValue>) -> Value {
        let requested = params
            .and_then(|p| serde_json::from_str::<Value>(p.get()).ok())
            .and_then(|p| p.get("protocolVersion").and_then(Value::as_str).map(str::to_string));
        json!({
            "protocolVersion": requested.unwrap_or_else(|| PROTOCOL_VERSION.to_string()),
            "capabilities": {"tools": {"listChanged": false}},
            "serverInfo": {"name": SERVER_NAME, "version": env!("CARGO_PKG_VERSION")}
        })
    }

    fn call(&self, params: Option<&RawValue>) -> Result<Value, (i64, String)> {
        let params = params.ok_or((INVALID_PARAMS, "tools/call needs params".to_string()))?;
        let call: CallParams<'_> =
            serde_json::from_str(params.get()).map_err(|e| (INVALID_PARAMS, e.to_string()))?;
        let arguments = call.arguments.map_or("{}", RawValue::get);
        match self.tools.call(&call.name, arguments) {
            Ok(text) => Ok(json!({"content": [{"type": "text", "text": text}], "isError": false})),
            Err(e) if e.is_argument_error() => Err((INVALID_PARAMS, e.to_string())),
            Err(e) => {
                tracing::warn!(tool = %call.name, error = %e, "tool failed");
                Ok(json!({"content": [{"type": "text", "text": e.to_string()}], "isError": true}))
            }
        }
    }
}

/// Newline-delimited JSON-RPC over a reader/writer pair until EOF.
pub fn serve_stdio(server: &McpServer, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(reply) = server.handle(&line) {
            output.write_all(reply.as_bytes())?;
            output.write_all(b"\n")?;
            output.flush()?;
        }
    }
    Ok(())
}

/// `POST /mcp` carries the same messages as stdio, one per request body.
pub fn http_router(server: Arc<McpServer>) -> Router {
    Router::new().route("/mcp", post(http_message)).with_state(server)
}

async fn http_message(State(server): State<Arc<McpServer>>, body: Bytes) -> Response {
    let text = String::from_utf8_lossy(&body).into_owned();
    let reply = tokio::task::spawn_blocking(move || server.handle(&text)).await;
    match reply {
        Ok(Some(json)) => ([(header::CONTENT_TYPE, "application/json")], json).into_response(),
        Ok(None) => StatusCode::ACCEPTED.into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

pub async fn serve_http(server: Arc<McpServer>, addr: SocketAddr) -> io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "mcp http bridge listening");
    axum::serve(listener, http_router(server)).await
}
