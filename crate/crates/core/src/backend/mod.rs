//! Single protocol for every model-dependent capability (classify, ner,
//! extract, entail), with an HTTP client and a deterministic in-process mock.

mod http;
mod mock;
pub mod protocol;

pub use http::HttpBackend;
pub use mock::{ClassifyRule, EntailRules, ExtractRule, MockBackend, MockRuleSet, ScoreOverride};
pub use protocol::{
    ClassifyRequest, ClassifyResponse, EntailRequest, EntailResponse, Endpoint, ErrorBody, ExtractRequest,
    ExtractResponse, NerMention, NerRequest, NerResponse, SchemaViolation,
};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    /// Network or server failure after the retry budget was spent.
    #[error("{endpoint}: transport error after {attempts} attempt(s): {message}")]
    Transport { endpoint: Endpoint, attempts: u32, message: String },
    #[error("{endpoint}: protocol error at `{field}`: {message}")]
    Protocol { endpoint: Endpoint, field: String, message: String },
    /// 4xx reply carrying the server's complaint.
    #[error("{endpoint}: request rejected with status {status} at `{field}`: {message}")]
    Rejected { endpoint: Endpoint, status: u16, field: String, message: String },
}

impl BackendError {
    fn protocol(endpoint: Endpoint, v: SchemaViolation) -> Self {
        BackendError::Protocol { endpoint, field: v.field, message: v.message }
    }
}

/// A model backend speaking the JSON protocol. Implementations must be safe
/// for concurrent use.
pub trait Backend: Send + Sync {
    fn call(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError>;
}

/// Validates the request, calls, validates the response, then decodes it.
pub fn call_typed<Req: Serialize, Resp: DeserializeOwned>(
    backend: &dyn Backend,
    endpoint: Endpoint,
    request: &Req,
) -> Result<Resp, BackendError> {
    let req = serde_json::to_value(request).map_err(|e| BackendError::Protocol {
        endpoint,
        field: "$".into(),
        message: e.to_string(),
    })?;
    protocol::validate_request(endpoint, &req).map_err(|v| BackendError::protocol(endpoint, v))?;
    let resp = backend.call(endpoint, &req)?;
    protocol::validate_response(endpoint, &resp).map_err(|v| BackendError::protocol(endpoint, v))?;
    serde_json::from_value(resp).map_err(|e| BackendError::Protocol {
        endpoint,
        field: "$".into(),
        message: e.to_string(),
    })
}

pub fn classify(backend: &dyn Backend, req: &ClassifyRequest) -> Result<ClassifyResponse, BackendError> {
    call_typed(backend, Endpoint::Classify, req)
}

/// NER call; also checks that every returned span indexes `req.text`.
pub fn ner(backend: &dyn Backend, req: &NerRequest) -> Result<NerResponse, BackendError> {
    let resp: NerResponse = call_typed(backend, Endpoint::Ner, req)?;
    for (i, m) in resp.mentions.iter().enumerate() {
        if crate::text::slice_chars(&req.text, m.start, m.end) != Some(m.surface.as_str()) {
            return Err(BackendError::Protocol {
                endpoint: Endpoint::Ner,
                field: format!("mentions[{i}].surface"),
                message: "surface does not equal text[start:end]".into(),
            });
        }
    }
    Ok(resp)
}

pub fn extract(backend: &dyn Backend, req: &ExtractRequest) -> Result<ExtractResponse, BackendError> {
    call_typed(backend, Endpoint::Extract, req)
}

pub fn entail(backend: &dyn Backend, req: &EntailRequest) -> Result<EntailResponse, BackendError> {
    call_typed(backend, Endpoint::Entail, req)
}

/// Connection settings for a real backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEndpointSet {
    pub base_url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub retry_budget: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_in_flight() -> usize {
    8
}
fn default_retries() -> u32 {
    3
}

impl BackendEndpointSet {
    pub fn new(base_url: impl Into<String>) -> Self {
        BackendEndpointSet {
            base_url: base_url.into(),
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_in_flight(),
            retry_budget: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.base_url.trim().is_empty() {
            return Err("backend base_url is empty".into());
        }
        if self.timeout_ms == 0 || self.max_in_flight == 0 || self.retry_budget == 0 {
            return Err("backend timeout, max_in_flight and retry_budget must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    struct Canned(Value);

    impl Backend for Canned {
        fn call(&self, _: Endpoint, _: &Value) -> Result<Value, BackendError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn malformed_response_is_protocol_error_naming_field() {
        let b = Canned(json!({"probability": 0.4}));
        let req = EntailRequest { premise: "p".into(), hypothesis: "h".into(), lang: crate::text::Lang::En };
        match entail(&b, &req) {
            Err(BackendError::Protocol { field, .. }) => assert_eq!(field, "entailment"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ner_offsets_must_index_text() {
        let b = Canned(json!({"mentions":[{"start":0,"end":3,"surface":"Tim"}]}));
        let req = NerRequest { text: "Tom Cook".into(), lang: crate::text::Lang::En };
        match ner(&b, &req) {
            Err(BackendError::Protocol { field, .. }) => assert_eq!(field, "mentions[0].surface"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn endpoint_set_validation() {
        assert!(BackendEndpointSet::new("http://localhost:8000").validate().is_ok());
        let mut e = BackendEndpointSet::new("http://x");
        e.max_in_flight = 0;
        assert!(e.validate().is_err());
    }
}
