//! Blocking client for a chat-completion HTTP endpoint.
//!
//! Wire format (see `docs/wire-format.md`): `POST {base_url}/chat/completions`
//! with body `{"model", "messages": [{"role", "content"}], "temperature",
//! "max_tokens"}` and `Authorization: Bearer <key>`. The reply must contain
//! `choices[0].message.content`.

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatMessage, ChatRequest};

pub const DEFAULT_API_KEY_ENV: &str = "TRAITSIM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(with = "secs")]
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub concurrency: usize,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
    pub api_key_env: String,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            model_name: "gpt-3.5-turbo".to_string(),
            timeout: Duration::from_secs(60),
            max_retries: 4,
            concurrency: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
        }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// API key. Never printed: `Debug` and `Display` are redacted.
#[derive(Clone, PartialEq, Eq)]
pub struct Credential(String);

impl Credential {
    pub fn new(secret: impl Into<String>) -> Self {
        Self(secret.into())
    }

    pub fn from_env(var: &str) -> Option<Self> {
        std::env::var(var).ok().filter(|v| !v.is_empty()).map(Self)
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Credential(***)")
    }
}

impl fmt::Display for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("***")
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self
                .freed
                .wait(available)
                .unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    credential: Option<Credential>,
    client: reqwest::blocking::Client,
    in_flight: Semaphore,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("config", &self.config)
            .field("credential", &self.credential)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(config: HttpConfig, credential: Option<Credential>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let in_flight = Semaphore::new(config.concurrency);
        Ok(Self {
            config,
            credential,
            client,
            in_flight,
        })
    }

    /// Reads the credential from the environment variable named in the config.
    pub fn from_env(config: HttpConfig) -> Result<Self, BackendError> {
        let credential = Credential::from_env(&config.api_key_env);
        Self::new(config, credential)
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn redact(&self, text: &str) -> String {
        match &self.credential {
            Some(c) if !c.expose().is_empty() => text.replace(c.expose(), "***"),
            _ => text.to_string(),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.config
            .base_delay
            .saturating_mul(factor)
            .min(self.config.max_delay)
    }

    fn attempt(&self, body: &WireRequest<'_>) -> Result<String, BackendError> {
        let mut builder = self.client.post(self.endpoint()).json(body);
        if let Some(credential) = &self.credential {
            builder = builder.bearer_auth(credential.expose());
        }
        let response = builder
            .send()
            .map_err(|e| BackendError::Transport(self.redact(&e.without_url().to_string())))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(self.redact(&e.to_string())))?;
        if !status.is_success() {
            let mut body = self.redact(&text);
            body.truncate(512);
            return Err(BackendError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        let model = if request.model_name.is_empty() {
            self.config.model_name.as_str()
        } else {
            request.model_name.as_str()
        };
        let body = WireRequest {
            model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };

        let _permit = self.in_flight.acquire();
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(err) if err.is_retryable() => {
                    if attempt >= self.config.max_retries {
                        return Err(BackendError::RetriesExhausted {
                            attempts: attempt + 1,
                            last: Box::new(err),
                        });
                    }
                    let delay = self.backoff(attempt);
                    log::warn!(
                        "chat request attempt {} of {} failed ({err}); retrying in {delay:?}",
                        attempt + 1,
                        self.config.max_retries + 1
                    );
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}
