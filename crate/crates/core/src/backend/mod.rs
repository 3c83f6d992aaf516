//! Chat backends: the request/response vocabulary, the [`ChatBackend`] trait,
//! an HTTP wire client and a seeded mock persona model.

mod http;
mod mock;

pub use http::{Credential, HttpBackend, HttpConfig, DEFAULT_API_KEY_ENV};
pub use mock::{
    calibrate_from_table, mock_draw, mock_evaluate, mock_presentation, mock_rating,
    CalibrationError, DrawSlot, MockBackend, MockDraw, MockPersonaParams, TraitParams,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{Keying, Phase};
use crate::domain::{AgentId, ClaimId, Dimension, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Decoding parameters forwarded with every chat request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Empty means "use the backend's configured model".
    pub model_name: String,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 256,
            model_name: String::new(),
        }
    }
}

/// What a request is for. Real models ignore this; the mock uses it in place
/// of reading the prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Purpose {
    Presentation {
        claim_id: ClaimId,
        round_no: u32,
        claim_text: String,
    },
    /// `evaluation_no` counts this evaluator's earlier evaluations in the
    /// trial, out of `evaluations_per_trial`.
    Evaluation {
        presenter_id: AgentId,
        claim_id: ClaimId,
        round_no: u32,
        evaluation_no: u32,
        evaluations_per_trial: u32,
    },
    Questionnaire {
        item_id: String,
        phase: Phase,
        keying: Keying,
        dimension: Dimension,
        polarity: Polarity,
    },
    Judge {
        response_text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestTag {
    pub trial_seed: u64,
    pub agent_label: String,
    pub purpose: Purpose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_name: String,
    /// Side-channel metadata; never sent over the wire.
    pub tag: Option<RequestTag>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>, params: &SamplingParams) -> Self {
        Self {
            messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            model_name: params.model_name.clone(),
            tag: None,
        }
    }

    pub fn tagged(mut self, tag: RequestTag) -> Self {
        self.tag = Some(tag);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest(
                "request has no messages".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("giving up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("mock backend has no parameters for trait `{0}`")]
    UnknownTrait(String),
    #[error("mock backend received an untagged request")]
    MissingTag,
    #[error("{0}")]
    Other(String),
}

impl BackendError {
    /// Transport failures, rate limiting and server errors are retried.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A chat-completion provider. Implementations must be callable from
/// concurrently running trials.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;

    fn name(&self) -> &str;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Uniform in [0, 1) from the top 53 bits.
pub(crate) fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let params = SamplingParams::default();
        assert!(ChatRequest::new(vec![], &params).validate().is_err());
        let mut req = ChatRequest::new(vec![ChatMessage::user("hi")], &params);
        assert!(req.validate().is_ok());
        req.temperature = -1.0;
        assert!(req.validate().is_err());
        req.temperature = 0.0;
        req.max_tokens = 0;
        assert!(req.validate().is_err());
    }

    #[test]
    fn retryable_classification() {
        assert!(BackendError::Status {
            status: 500,
            body: String::new()
        }
        .is_retryable());
        assert!(BackendError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::Status {
            status: 401,
            body: String::new()
        }
        .is_retryable());
        assert!(BackendError::Transport("reset".into()).is_retryable());
        assert!(!BackendError::Malformed("x".into()).is_retryable());
    }

    #[test]
    fn role_wire_names() {
        let json = serde_json::to_string(&ChatMessage::system("s")).unwrap();
        assert_eq!(json, r#"{"role":"system","content":"s"}"#);
    }
}
