//! HTTP completion backend.
//!
//! Speaks the plain completions wire format: `POST <url>` with a JSON body
//! of `model`, `prompt`, `temperature`, and `max_tokens`, expecting
//! `{"choices": [{"text": ...}]}` back. The API key is read from the
//! environment variable named in the config at construction time — never
//! from the config file itself — and sent as a bearer token.
//!
//! Transient failures (HTTP 429, any 5xx, and transport errors) are retried
//! with exponential backoff: the first retry waits `retry_base`, each
//! further retry doubles it, capped at 30 s. Everything else fails fast.

use std::time::Duration;

use influence_core::backend::{BackendError, CompletionBackend, CompletionParams};
use influence_core::prompt::PromptText;
use serde::{Deserialize, Serialize};

use crate::config::BackendSection;
use crate::error::CliError;

const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

/// A remote completions endpoint.
#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
    max_retries: u32,
    retry_base: Duration,
}

impl HttpBackend {
    /// Build the backend from config, resolving the API key from the
    /// environment. An empty `api_key_env` opts out of authentication.
    pub fn from_config(cfg: &BackendSection) -> Result<HttpBackend, CliError> {
        let api_key = if cfg.api_key_env.is_empty() {
            None
        } else {
            match std::env::var(&cfg.api_key_env) {
                Ok(key) if !key.is_empty() => Some(key),
                _ => {
                    return Err(BackendError::AuthMissing {
                        detail: format!(
                            "environment variable {} is unset or empty",
                            cfg.api_key_env
                        ),
                    }
                    .into())
                }
            }
        };
        Ok(HttpBackend::new(
            &cfg.url,
            api_key,
            cfg.max_retries,
            Duration::from_millis(cfg.retry_base_ms),
        ))
    }

    /// Build the backend from already-resolved parts.
    pub fn new(
        url: &str,
        api_key: Option<String>,
        max_retries: u32,
        retry_base: Duration,
    ) -> HttpBackend {
        HttpBackend {
            client: reqwest::blocking::Client::new(),
            url: url.to_string(),
            api_key,
            max_retries,
            retry_base,
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.retry_base.saturating_mul(factor).min(MAX_BACKOFF)
    }

    fn send_once(
        &self,
        prompt: &PromptText,
        params: &CompletionParams,
    ) -> Result<String, Failure> {
        let body = CompletionRequest {
            model: &params.model,
            prompt: &prompt.text,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let mut request = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            Failure::Transient(BackendError::Transport { detail: e.to_string() })
        })?;
        let status = response.status();
        if status.is_success() {
            let parsed: CompletionResponse = response.json().map_err(|e| {
                Failure::Fatal(BackendError::Api {
                    detail: format!("malformed completion response: {e}"),
                })
            })?;
            return match parsed.choices.into_iter().next() {
                Some(choice) => Ok(choice.text),
                None => Err(Failure::Fatal(BackendError::Api {
                    detail: "completion response carries no choices".into(),
                })),
            };
        }
        let snippet = body_snippet(response);
        match status.as_u16() {
            401 | 403 => Err(Failure::Fatal(BackendError::AuthMissing {
                detail: format!("endpoint rejected the credential ({status}): {snippet}"),
            })),
            429 => Err(Failure::RateLimited),
            500..=599 => Err(Failure::Transient(BackendError::Api {
                detail: format!("server error {status}: {snippet}"),
            })),
            _ => Err(Failure::Fatal(BackendError::Api {
                detail: format!("request rejected ({status}): {snippet}"),
            })),
        }
    }
}

/// How one attempt failed, and whether another attempt may help.
enum Failure {
    /// Worth retrying: transport failures and server errors.
    Transient(BackendError),
    /// Worth retrying; reported as `RateLimited` once retries run out.
    RateLimited,
    /// Retrying cannot help.
    Fatal(BackendError),
}

fn body_snippet(response: reqwest::blocking::Response) -> String {
    let text = response.text().unwrap_or_default();
    let trimmed = text.trim();
    if trimmed.len() > 200 {
        format!("{}...", &trimmed[..200])
    } else {
        trimmed.to_string()
    }
}

impl CompletionBackend for HttpBackend {
    fn name(&self) -> &'static str {
        "http"
    }

    fn complete(
        &self,
        prompt: &PromptText,
        params: &CompletionParams,
    ) -> Result<String, BackendError> {
        params.validate()?;
        let mut attempt = 0u32;
        loop {
            let failure = match self.send_once(prompt, params) {
                Ok(text) => return Ok(text),
                Err(failure) => failure,
            };
            match failure {
                Failure::Fatal(err) => return Err(err),
                Failure::Transient(err) if attempt >= self.max_retries => return Err(err),
                Failure::RateLimited if attempt >= self.max_retries => {
                    return Err(BackendError::RateLimited { attempts: attempt + 1 })
                }
                Failure::Transient(_) | Failure::RateLimited => {
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }
}
