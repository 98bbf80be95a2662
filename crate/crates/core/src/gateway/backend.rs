//! Completion backends: the chat-completion HTTP client and a router that
//! dispatches mock-configured models to the mock backend.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use serde_json::json;

use super::mock::MockBackend;
use super::{BackendFailure, GatewayError, ModelSpec, Request};

pub trait Backend: Send + Sync {
    fn complete(&self, spec: &ModelSpec, request: &Request) -> Result<String, BackendFailure>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, spec: &ModelSpec, request: &Request) -> Result<String, BackendFailure> {
        (**self).complete(spec, request)
    }
}

/// Chat-completion client: single user message per request, bearer token
/// from the spec's environment variable.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("reqwest client builds");
        HttpBackend { client }
    }
}

impl Default for HttpBackend {
    fn default() -> Self {
        HttpBackend::new(Duration::from_secs(120))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, spec: &ModelSpec, request: &Request) -> Result<String, BackendFailure> {
        let token = std::env::var(&spec.auth_env_var).map_err(|_| {
            BackendFailure::Permanent(GatewayError::Credential {
                model_id: spec.model_id.clone(),
                reason: format!("environment variable `{}` not set", spec.auth_env_var),
            })
        })?;
        let mut body = json!({
            "model": spec.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.decoding.temperature,
            "max_tokens": request.decoding.max_tokens,
        });
        if let Some(seed) = request.decoding.seed {
            body["seed"] = json!(seed);
        }

        let response = self
            .client
            .post(&spec.endpoint)
            .bearer_auth(token)
            .json(&body)
            .send()
            .map_err(|e| BackendFailure::Transient(e.to_string()))?;

        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendFailure::Permanent(GatewayError::Credential {
                model_id: spec.model_id.clone(),
                reason: format!("endpoint rejected credentials (HTTP {status})"),
            }));
        }
        if status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendFailure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendFailure::Permanent(GatewayError::Protocol {
                model_id: spec.model_id.clone(),
                reason: format!("HTTP {status}"),
            }));
        }

        let payload: serde_json::Value = response.json().map_err(|e| {
            BackendFailure::Permanent(GatewayError::Protocol {
                model_id: spec.model_id.clone(),
                reason: format!("response is not JSON: {e}"),
            })
        })?;
        payload
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(|t| t.as_str())
            .map(String::from)
            .ok_or_else(|| {
                BackendFailure::Permanent(GatewayError::Protocol {
                    model_id: spec.model_id.clone(),
                    reason: "response lacks choices[0].message.content".into(),
                })
            })
    }
}

/// Routes models with a registered mock to the mock backend, everything
/// else to HTTP.
pub struct RouterBackend {
    mock: Arc<MockBackend>,
    http: HttpBackend,
    mock_ids: BTreeSet<String>,
}

impl RouterBackend {
    pub fn new(mock: Arc<MockBackend>, http: HttpBackend, mock_ids: BTreeSet<String>) -> Self {
        RouterBackend {
            mock,
            http,
            mock_ids,
        }
    }
}

impl Backend for RouterBackend {
    fn complete(&self, spec: &ModelSpec, request: &Request) -> Result<String, BackendFailure> {
        if self.mock_ids.contains(&spec.model_id) {
            self.mock.complete(spec, request)
        } else {
            self.http.complete(spec, request)
        }
    }
}
