//! Model Context Protocol tool server: article writing, problem generation
//! and solving, sandboxed code execution and batch scoring.

pub mod rpc;
pub mod sandbox;
pub mod scoring;
pub mod tools;

pub use rpc::{http_router, serve_http, serve_stdio, McpServer};
pub use sandbox::{ExecResult, LanguageSpec, Sandbox, SandboxConfig, SandboxError, SANDBOX_ROOT_ENV};
pub use scoring::{ScoreResult, Scorer, ScorerRegistry};
pub use tools::{
    manifest, ArticleContent, KnowledgeBase, Problem, ToolConfig, ToolError, ToolService, DEFAULT_EDUCATION_LEVEL,
    TOOL_NAMES,
};
