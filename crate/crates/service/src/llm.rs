//! Chat-completion provider over HTTP (OpenAI-compatible wire format).

use std::time::Duration;

use judgebox_core::synth::{LlmProvider, ProviderError};
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Full URL of the chat completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    /// Environment variable holding the bearer token; unset means no auth.
    pub api_key_env: String,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub requests_per_minute: Option<u32>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            temperature: 0.0,
            max_tokens: None,
            api_key_env: "JUDGEBOX_LLM_API_KEY".into(),
            timeout_s: 300,
            max_retries: 4,
            initial_backoff_ms: 500,
            requests_per_minute: None,
        }
    }
}

pub struct HttpProvider {
    config: LlmConfig,
    api_key: Option<String>,
    http: Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

fn retryable(e: &ProviderError) -> bool {
    match e {
        ProviderError::Transport(_) => true,
        ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl HttpProvider {
    pub fn new(config: LlmConfig) -> Result<Self, ProviderError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Self { config, api_key, http })
    }

    fn once(&self, prompt: &str) -> Result<String, ProviderError> {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(n) = self.config.max_tokens {
            body["max_tokens"] = n.into();
        }
        let mut req = self.http.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status { status: status.as_u16(), body: text });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| ProviderError::Transport(format!("malformed reply: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Transport("reply has no content".into()))
    }
}

impl LlmProvider for HttpProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let mut delay = Duration::from_millis(self.config.initial_backoff_ms);
        let mut attempt = 0;
        loop {
            match self.once(prompt) {
                Err(e) if retryable(&e) && attempt < self.config.max_retries => {
                    tracing::warn!(error = %e, attempt, "provider call failed, backing off");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
