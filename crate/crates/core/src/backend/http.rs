//! OpenAI-compatible chat-completions client.

use std::sync::RwLock;
use std::time::Duration;

use serde::Deserialize;

use crate::backend::{ChatReply, ChatRequest};
use crate::error::{Error, Result};

/// Environment variable holding the API key. Never logged.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

const DEFAULT_CHARS_PER_TOKEN: f64 = 4.0;

pub struct HttpLlm {
    base_url: String,
    model_id: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    /// Calibrated from usage metadata as replies come back.
    chars_per_token: RwLock<f64>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: usize,
    #[serde(default)]
    completion_tokens: usize,
}

impl HttpLlm {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>, timeout_ms: u64) -> Self {
        HttpLlm {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model_id: model_id.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_millis(timeout_ms))
                .build()
                .expect("http client"),
            chars_per_token: RwLock::new(DEFAULT_CHARS_PER_TOKEN),
        }
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Approximate token count from the calibrated chars-per-token ratio.
    pub fn token_len(&self, text: &str) -> usize {
        let ratio = *self.chars_per_token.read().unwrap();
        ((text.chars().count() as f64 / ratio).ceil() as usize).max(1)
    }

    pub fn complete(&self, req: &ChatRequest, retry_budget: usize) -> Result<ChatReply> {
        let body = serde_json::json!({
            "model": self.model_id,
            "messages": req.messages.iter().map(|m| serde_json::json!({
                "role": m.role.as_str(),
                "content": m.text,
            })).collect::<Vec<_>>(),
            "temperature": req.temperature,
        });
        let url = format!("{}/v1/chat/completions", self.base_url);

        let mut last_err = None;
        for attempt in 0..=retry_budget {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << (attempt - 1).min(6)));
            }
            let mut request = self.client.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Err(e) => {
                    last_err = Some(Error::BackendUnavailable {
                        reason: e.to_string(),
                    });
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: CompletionResponse =
                            resp.json().map_err(|e| Error::ReplyParseFailed {
                                what: format!("bad completion body: {e}"),
                            })?;
                        let usage = parsed.usage.unwrap_or_default();
                        if usage.prompt_tokens > 0 {
                            let chars: usize = req
                                .messages
                                .iter()
                                .map(|m| m.text.chars().count())
                                .sum();
                            *self.chars_per_token.write().unwrap() =
                                (chars as f64 / usage.prompt_tokens as f64).max(0.5);
                        }
                        let text = parsed
                            .choices
                            .into_iter()
                            .next()
                            .map(|c| c.message.content)
                            .ok_or_else(|| Error::ReplyParseFailed {
                                what: "completion had no choices".into(),
                            })?;
                        return Ok(ChatReply {
                            text,
                            prompt_tokens: usage.prompt_tokens,
                            completion_tokens: usage.completion_tokens,
                        });
                    }
                    let code = status.as_u16();
                    let body_text = resp.text().unwrap_or_default();
                    let err = Error::Http {
                        status: code,
                        body: body_text,
                    };
                    // Server-side and rate-limit failures are retryable.
                    if code >= 500 || code == 429 {
                        last_err = Some(err);
                    } else {
                        return Err(err);
                    }
                }
            }
        }
        Err(last_err.unwrap_or(Error::BackendUnavailable {
            reason: "no attempts made".into(),
        }))
    }
}
