//! Provider abstraction for the four model touchpoints, prompt templates,
//! and extraction of structured payloads from free-form replies.

mod extract;
mod live;
mod mock;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::NormalizeError;

pub use extract::{extract_payload, ExtractedClause, StructuredPayload};
pub use live::{HttpProvider, HttpProviderConfig};
pub use mock::ScriptedProvider;
pub use prompt::{contracts_block, render_prompt, template, FORMAT_REMINDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    DecomposeIntent,
    GenerateContracts,
    GenerateCode,
    RepairCode,
}

impl Purpose {
    pub const ALL: [Purpose; 4] =
        [Purpose::DecomposeIntent, Purpose::GenerateContracts, Purpose::GenerateCode, Purpose::RepairCode];

    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::DecomposeIntent => "decompose_intent",
            Purpose::GenerateContracts => "generate_contracts",
            Purpose::GenerateCode => "generate_code",
            Purpose::RepairCode => "repair_code",
        }
    }

    pub fn parse(s: &str) -> Option<Purpose> {
        Purpose::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn default_temperature(self) -> f64 {
        match self {
            Purpose::GenerateContracts | Purpose::RepairCode => 0.0,
            Purpose::DecomposeIntent | Purpose::GenerateCode => 0.2,
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub purpose: Purpose,
    pub template_id: String,
    pub variables: BTreeMap<String, String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl PromptRequest {
    /// Uses the purpose's built-in template and default temperature.
    pub fn new(purpose: Purpose, variables: BTreeMap<String, String>) -> Self {
        PromptRequest {
            purpose,
            template_id: purpose.as_str().to_string(),
            variables,
            temperature: purpose.default_temperature(),
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.variables.insert(name.to_string(), value.into());
        self
    }

    fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {} is outside [0, 1]", self.temperature)));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Complete,
    Truncated,
    ProviderError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    /// Absent exactly when `finish_reason` is `provider_error`.
    pub raw_text: Option<String>,
    pub finish_reason: FinishReason,
    pub usage: Option<Usage>,
}

impl ProviderResponse {
    pub fn complete(text: impl Into<String>) -> Self {
        ProviderResponse { raw_text: Some(text.into()), finish_reason: FinishReason::Complete, usage: None }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unbound template variables: {}", .0.join(", "))]
    MissingVariable(Vec<String>),
    #[error("invalid prompt request: {0}")]
    InvalidRequest(String),
    #[error("transport error{}: {excerpt}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, excerpt: String },
    #[error("provider did not answer within {0:?}")]
    Timeout(Duration),
    #[error("provider reported an error: {0}")]
    Provider(String),
    #[error("mock script has no more `{purpose}` entries ({consumed} consumed)")]
    ScriptExhausted { purpose: Purpose, consumed: usize },
    #[error("mock script: {0}")]
    Script(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("no structured payload found in the reply")]
    NoPayload,
    #[error("payload field `{field}`: {detail}")]
    Schema { field: String, detail: String },
    #[error("clause {index}: {source}")]
    Normalization {
        index: usize,
        #[source]
        source: NormalizeError,
    },
}

impl LlmError {
    fn retryable(&self) -> bool {
        matches!(self, LlmError::NoPayload | LlmError::Schema { .. })
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &PromptRequest, prompt: &str) -> Result<ProviderResponse, LlmError>;
}

/// Renders the request and sends it to `provider`.
pub fn complete(request: &PromptRequest, provider: &dyn Provider) -> Result<ProviderResponse, LlmError> {
    let prompt = render_prompt(request)?;
    provider.complete(request, &prompt)
}

/// One prompt/response round trip, kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub purpose: Purpose,
    pub prompt: String,
    pub response: Option<String>,
}

/// Sends the request and extracts the purpose's payload. A reply without a
/// usable payload is retried once with a format reminder appended.
pub fn request_payload(
    request: &PromptRequest,
    provider: &dyn Provider,
) -> Result<(StructuredPayload, Vec<Exchange>), LlmError> {
    request.validate()?;
    let prompt = render_prompt(request)?;
    let mut exchanges = Vec::new();
    let first = attempt(request, provider, &prompt, &mut exchanges);
    match first {
        Err(e) if e.retryable() => {
            let retry_prompt = format!("{prompt}\n\n{FORMAT_REMINDER}\nThe previous reply was unusable: {e}\n");
            let payload = attempt(request, provider, &retry_prompt, &mut exchanges)?;
            Ok((payload, exchanges))
        }
        other => other.map(|p| (p, exchanges)),
    }
}

fn attempt(
    request: &PromptRequest,
    provider: &dyn Provider,
    prompt: &str,
    log: &mut Vec<Exchange>,
) -> Result<StructuredPayload, LlmError> {
    let response = provider.complete(request, prompt)?;
    log.push(Exchange { purpose: request.purpose, prompt: prompt.to_string(), response: response.raw_text.clone() });
    match (response.finish_reason, response.raw_text) {
        (FinishReason::ProviderError, _) | (_, None) => Err(LlmError::Provider("no candidate text".into())),
        (_, Some(text)) => extract_payload(request.purpose, &text),
    }
}
