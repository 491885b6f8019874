//! Frozen transcript playback.
//!
//! A transcript maps the SHA-256 of `system_prompt + "\n\n" + user_prompt` to a
//! recorded response. Replaying a transcript makes judge-dependent code fully
//! offline and reproducible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{approx_tokens, Backend, BackendSpec, ChatRequest, Completion, GatewayError, Transport};
use crate::digest::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt_sha256: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default)]
    pub model_name: String,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn key(request: &ChatRequest) -> String {
        sha256_hex(format!("{}\n\n{}", request.system_prompt, request.user_prompt).as_bytes())
    }

    pub fn record(&mut self, request: &ChatRequest, response: impl Into<String>) {
        let key = Self::key(request);
        let response = response.into();
        match self.entries.iter_mut().find(|e| e.prompt_sha256 == key) {
            Some(e) => e.response = response,
            None => self.entries.push(TranscriptEntry {
                prompt_sha256: key,
                response,
            }),
        }
    }

    pub fn into_spec(self, backend_id: impl Into<String>) -> BackendSpec {
        let id = backend_id.into();
        BackendSpec {
            backend_id: id.clone(),
            provider_name: format!("replay-{id}"),
            endpoint: "replay://".into(),
            model_name: if self.model_name.is_empty() {
                "replay".into()
            } else {
                self.model_name.clone()
            },
            max_concurrency: 64,
            timeout_s: 1.0,
            transport: Transport::Replay { transcript: self },
        }
    }
}

pub struct ReplayBackend {
    by_key: BTreeMap<String, String>,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self {
            by_key: transcript
                .entries
                .into_iter()
                .map(|e| (e.prompt_sha256, e.response))
                .collect(),
        }
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, spec: &BackendSpec, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let key = Transcript::key(request);
        let text = self.by_key.get(&key).ok_or_else(|| GatewayError::Provider {
            backend_id: spec.backend_id.clone(),
            status: 404,
            body: format!("no recorded response for prompt {key}"),
        })?;
        Ok(Completion {
            token_count: approx_tokens(text),
            text: text.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Gateway;

    #[test]
    fn replays_recorded_and_rejects_unknown() {
        let mut t = Transcript::default();
        let req = ChatRequest::new("judge", "article text");
        t.record(&req, "1. a point");
        let mut gw = Gateway::new();
        gw.register_backend(t.into_spec("judge")).unwrap();
        assert_eq!(gw.complete("judge", &req).unwrap().text, "1. a point");
        assert!(gw.complete("judge", &ChatRequest::new("judge", "other")).is_err());
    }
}
