//! Deterministic scripted backend.
//!
//! Rules are tried in order; the first whose `pattern` is a substring of the
//! user prompt produces the response. Templates may contain slots:
//!
//! | slot | expansion |
//! |------|-----------|
//! | `{prompt}` | the user prompt |
//! | `{system}` | the system prompt |
//! | `{seed}` | the script seed |
//! | `{digest}` | 16 hex chars identifying (seed, request) |
//! | `{line:PREFIX}` | rest of the first prompt line starting with `PREFIX` |
//! | `{grep:NEEDLE}` | every prompt line containing `NEEDLE`, newline-joined |
//! | `{pick:P:A\|B}` | `A` with probability `P`, else `B` |
//! | `{choose:A\|B\|...}` | one option, uniformly |
//!
//! Random slots draw from a stream seeded by (seed, request), so the same
//! request always yields the same bytes. Braces that do not open a known slot
//! are copied verbatim, which keeps JSON templates readable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{approx_tokens, Backend, BackendSpec, ChatRequest, Completion, GatewayError, Transport};
use crate::digest::seed_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Timeout,
    Transport,
    Status(u16),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub pattern: String,
    #[serde(default)]
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<MockFailure>,
}

impl MockRule {
    pub fn new(pattern: impl Into<String>, template: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            template: template.into(),
            fail: None,
        }
    }

    pub fn failing(pattern: impl Into<String>, failure: MockFailure) -> Self {
        Self {
            pattern: pattern.into(),
            template: String::new(),
            fail: Some(failure),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default_response: String,
}

impl MockScript {
    pub fn constant(response: impl Into<String>) -> Self {
        Self {
            seed: 0,
            rules: Vec::new(),
            default_response: response.into(),
        }
    }

    pub fn rule(mut self, pattern: impl Into<String>, template: impl Into<String>) -> Self {
        self.rules.push(MockRule::new(pattern, template));
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Expands the matching template for `request`.
    pub fn respond(&self, request: &ChatRequest) -> Result<String, MockFailure> {
        let rule = self
            .rules
            .iter()
            .find(|r| request.user_prompt.contains(&r.pattern));
        if let Some(failure) = rule.and_then(|r| r.fail) {
            return Err(failure);
        }
        let template = rule.map_or(self.default_response.as_str(), |r| r.template.as_str());
        Ok(expand(template, self.seed, request))
    }
}

/// Spec for a mock backend; id and provider default to `mock-<seed>`.
pub fn mock_backend(script: MockScript) -> BackendSpec {
    let id = format!("mock-{}", script.seed);
    BackendSpec {
        backend_id: id.clone(),
        provider_name: id,
        endpoint: format!("mock://{}", script.seed),
        model_name: "mock".into(),
        max_concurrency: 8,
        timeout_s: 30.0,
        transport: Transport::Mock { script },
    }
}

pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }
}

impl Backend for MockBackend {
    fn complete(&self, spec: &BackendSpec, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let backend_id = spec.backend_id.clone();
        match self.script.respond(request) {
            Ok(text) => Ok(Completion {
                token_count: approx_tokens(&text),
                text,
            }),
            Err(MockFailure::Timeout) => Err(GatewayError::Timeout { backend_id }),
            Err(MockFailure::Transport) => Err(GatewayError::Transport {
                backend_id,
                message: "scripted transport failure".into(),
            }),
            Err(MockFailure::Status(status)) => Err(GatewayError::Provider {
                backend_id,
                status,
                body: "scripted provider error".into(),
            }),
        }
    }
}

fn request_seed(seed: u64, request: &ChatRequest) -> u64 {
    let req_seed = request.seed.unwrap_or(0);
    seed_from(&[
        &seed.to_le_bytes(),
        &req_seed.to_le_bytes(),
        request.system_prompt.as_bytes(),
        request.user_prompt.as_bytes(),
    ])
}

const SLOTS: &[&str] = &["prompt}", "system}", "seed}", "digest}", "line:", "grep:", "pick:", "choose:"];

fn expand(template: &str, seed: u64, request: &ChatRequest) -> String {
    let stream_seed = request_seed(seed, request);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let known = SLOTS.iter().any(|s| after.starts_with(s));
        let close = after.find('}');
        match (known, close) {
            (true, Some(close)) => {
                out.push_str(&slot(&after[..close], seed, stream_seed, request, &mut rng));
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn slot(body: &str, seed: u64, stream_seed: u64, request: &ChatRequest, rng: &mut ChaCha8Rng) -> String {
    let (name, arg) = body.split_once(':').unwrap_or((body, ""));
    match name {
        "prompt" => request.user_prompt.clone(),
        "system" => request.system_prompt.clone(),
        "seed" => seed.to_string(),
        "digest" => format!("{stream_seed:016x}"),
        "line" => request
            .user_prompt
            .lines()
            .find_map(|l| l.trim_start().strip_prefix(arg))
            .map(|s| s.trim().to_string())
            .unwrap_or_default(),
        "grep" => request
            .user_prompt
            .lines()
            .filter(|l| l.contains(arg))
            .collect::<Vec<_>>()
            .join("\n"),
        "pick" => {
            let (p, options) = arg.split_once(':').unwrap_or(("0.5", arg));
            let p: f64 = p.trim().parse().unwrap_or(0.5);
            let (first, second) = options.split_once('|').unwrap_or((options, ""));
            if rng.gen::<f64>() < p {
                first.to_string()
            } else {
                second.to_string()
            }
        }
        "choose" => {
            let options: Vec<&str> = arg.split('|').collect();
            options[rng.gen_range(0..options.len())].to_string()
        }
        _ => String::new(),
    }
}
