//! JSON chat-completion backend over HTTP.
//!
//! Field names differ between providers, so the request body and the response
//! paths come from a [`WireFormat`] table carried in the backend spec. The API
//! key is read from `<PROVIDER>_API_KEY` (provider name upper-cased, other
//! characters mapped to `_`).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{approx_tokens, Backend, BackendSpec, ChatRequest, Completion, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WireFormat {
    pub model_field: String,
    pub messages_field: String,
    pub temperature_field: String,
    pub max_tokens_field: String,
    /// Omitted from the body when empty.
    pub seed_field: String,
    /// JSON pointer to the completion text.
    pub response_text_pointer: String,
    /// JSON pointer to the token count; missing counts are estimated.
    pub token_count_pointer: String,
    pub api_key_header: String,
    pub api_key_prefix: String,
}

impl Default for WireFormat {
    fn default() -> Self {
        Self {
            model_field: "model".into(),
            messages_field: "messages".into(),
            temperature_field: "temperature".into(),
            max_tokens_field: "max_tokens".into(),
            seed_field: "seed".into(),
            response_text_pointer: "/choices/0/message/content".into(),
            token_count_pointer: "/usage/total_tokens".into(),
            api_key_header: "Authorization".into(),
            api_key_prefix: "Bearer ".into(),
        }
    }
}

impl WireFormat {
    pub fn request_body(&self, model: &str, request: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if !request.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_prompt}));
        }
        messages.push(json!({"role": "user", "content": request.user_prompt}));
        let mut body = Map::new();
        body.insert(self.model_field.clone(), json!(model));
        body.insert(self.messages_field.clone(), Value::Array(messages));
        body.insert(self.temperature_field.clone(), json!(request.temperature));
        body.insert(self.max_tokens_field.clone(), json!(request.max_tokens));
        if let (false, Some(seed)) = (self.seed_field.is_empty(), request.seed) {
            body.insert(self.seed_field.clone(), json!(seed));
        }
        Value::Object(body)
    }

    pub fn parse_response(&self, backend_id: &str, body: &Value) -> Result<Completion, GatewayError> {
        let text = body
            .pointer(&self.response_text_pointer)
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Malformed {
                backend_id: backend_id.into(),
                message: format!("no string at {}", self.response_text_pointer),
            })?
            .to_string();
        let token_count = body
            .pointer(&self.token_count_pointer)
            .and_then(Value::as_u64)
            .unwrap_or_else(|| approx_tokens(&text));
        Ok(Completion { text, token_count })
    }
}

pub fn api_key_var(provider_name: &str) -> String {
    let stem: String = provider_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("{stem}_API_KEY")
}

#[derive(Default)]
pub struct HttpBackend;

impl HttpBackend {
    pub fn new() -> Self {
        Self
    }
}

impl Backend for HttpBackend {
    fn complete(&self, spec: &BackendSpec, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let wire = match &spec.transport {
            super::Transport::Http { wire } => wire.clone(),
            _ => WireFormat::default(),
        };
        let backend_id = spec.backend_id.clone();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(spec.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut call = agent.post(&spec.endpoint);
        if let Ok(key) = std::env::var(api_key_var(&spec.provider_name)) {
            call = call.header(wire.api_key_header.as_str(), format!("{}{}", wire.api_key_prefix, key));
        }
        let body = wire.request_body(&spec.model_name, request);
        let response = call.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout {
                backend_id: backend_id.clone(),
            },
            other => GatewayError::Transport {
                backend_id: backend_id.clone(),
                message: other.to_string(),
            },
        })?;
        let status = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| GatewayError::Transport {
                backend_id: backend_id.clone(),
                message: e.to_string(),
            })?;
        if status >= 400 {
            return Err(GatewayError::Provider {
                backend_id,
                status,
                body: text,
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Malformed {
            backend_id: backend_id.clone(),
            message: e.to_string(),
        })?;
        wire.parse_response(&backend_id, &value)
    }
}
