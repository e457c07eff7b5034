use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{FinishReason, LlmError, PromptRequest, Provider, ProviderResponse, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    /// e.g. `https://api.example.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Sent as a bearer token when present.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub timeout: Duration,
}

/// Chat-completions style endpoint over HTTP(S).
pub struct HttpProvider {
    config: HttpProviderConfig,
    agent: ureq::Agent,
}

const EXCERPT_LEN: usize = 300;

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_LEN).collect()
}

impl Provider for HttpProvider {
    fn complete(&self, request: &PromptRequest, prompt: &str) -> Result<ProviderResponse, LlmError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let mut call = self.agent.post(self.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let transport = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => LlmError::Timeout(self.config.timeout),
            other => LlmError::Transport { status: None, excerpt: other.to_string() },
        };
        let mut response = call.send(body.to_string()).map_err(transport)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(transport)?;
        if status >= 400 {
            return Err(LlmError::Transport { status: Some(status), excerpt: excerpt(&text) });
        }
        let doc: Json = serde_json::from_str(&text).map_err(|e| LlmError::Transport {
            status: Some(status),
            excerpt: format!("unreadable response body ({e}): {}", excerpt(&text)),
        })?;
        let choice = &doc["choices"][0];
        let usage = doc.get("usage").map(|u| Usage {
            prompt_tokens: u["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: u["completion_tokens"].as_u64().unwrap_or(0),
        });
        let Some(content) = choice["message"]["content"].as_str() else {
            return Ok(ProviderResponse { raw_text: None, finish_reason: FinishReason::ProviderError, usage });
        };
        let finish_reason = match choice["finish_reason"].as_str() {
            Some("length") => FinishReason::Truncated,
            _ => FinishReason::Complete,
        };
        Ok(ProviderResponse { raw_text: Some(content.to_string()), finish_reason, usage })
    }
}
