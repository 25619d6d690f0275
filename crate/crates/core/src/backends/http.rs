//! OpenAI-compatible chat-completion client.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, BackendResponse, GenerationRequest, PromptSet, Usage};
use crate::budget::CallPermit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; no header is sent when unset.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: Some("METAREASON_API_KEY".into()),
            timeout_secs: 120,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    prompts: PromptSet,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("config", &self.config).finish_non_exhaustive()
    }
}

enum Failure {
    Retryable(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig, prompts: PromptSet) -> Result<Self, BackendError> {
        let api_key = config.api_key_env.as_deref().and_then(|var| std::env::var(var).ok()).filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(Self { config, prompts, api_key, client })
    }

    pub fn body(&self, request: &GenerationRequest) -> Value {
        let prompt = self.prompts.render(request);
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": request.decoding.temperature,
            "top_p": request.decoding.top_p,
            "max_tokens": request.decoding.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<BackendResponse, Failure> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Failure::Fatal(BackendError::Auth(format!("HTTP {status}"))));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Failure::Fatal(BackendError::Protocol(format!("HTTP {status}: {text}"))));
        }
        let value: Value = resp.json().map_err(|e| Failure::Fatal(BackendError::Protocol(e.to_string())))?;
        parse_completion(&value).map_err(Failure::Fatal)
    }
}

/// Extracts `choices[0].message.content` and `usage` from a completion body.
pub fn parse_completion(value: &Value) -> Result<BackendResponse, BackendError> {
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))?;
    let usage = value
        .get("usage")
        .and_then(|u| Some(Usage { prompt_tokens: u.get("prompt_tokens")?.as_u64()?, completion_tokens: u.get("completion_tokens")?.as_u64()? }));
    Ok(BackendResponse { text: text.to_string(), usage, transport_retries: 0 })
}

impl Backend for HttpBackend {
    fn invoke(&self, request: &GenerationRequest, _permit: &CallPermit) -> Result<BackendResponse, BackendError> {
        let body = self.body(request);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(6))));
            }
            match self.attempt(&body) {
                Ok(mut resp) => {
                    resp.transport_retries = attempt;
                    return Ok(resp);
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => last = msg,
            }
        }
        Err(BackendError::Transport { attempts: self.config.max_retries + 1, message: last })
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_completion_with_usage() {
        let v = json!({"choices": [{"message": {"role": "assistant", "content": "Confidence: 0.7"}}],
                       "usage": {"prompt_tokens": 12, "completion_tokens": 3}});
        let r = parse_completion(&v).unwrap();
        assert_eq!(r.text, "Confidence: 0.7");
        assert_eq!(r.usage, Some(Usage { prompt_tokens: 12, completion_tokens: 3 }));
    }

    #[test]
    fn missing_content_is_protocol_error() {
        assert!(matches!(parse_completion(&json!({"choices": []})), Err(BackendError::Protocol(_))));
    }
}
