//! Chat-completions HTTP backend. Wire format: POST `{model, messages}`,
//! response with choices-style content and optional token usage. The API key
//! comes from `REMEDBENCH_API_KEY`; it never lives in config files.

use std::time::Duration;

use serde_json::json;

use super::backend::{
    estimated_usage, BackendError, ChatMessage, Completion, ModelBackend, TokenUsage,
};

pub const API_KEY_ENV: &str = "REMEDBENCH_API_KEY";
pub const DEFAULT_TIMEOUT_S: u64 = 300;

pub struct RemoteChat {
    pub endpoint: String,
    pub model: String,
    api_key: Option<String>,
}

impl RemoteChat {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteChat {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }
}

fn excerpt(body: &str) -> String {
    let trimmed = body.trim();
    if trimmed.len() <= 200 {
        trimmed.to_string()
    } else {
        let mut end = 200;
        while end > 0 && !trimmed.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &trimmed[..end])
    }
}

impl ModelBackend for RemoteChat {
    fn complete(
        &self,
        messages: &[ChatMessage],
        timeout_s: u64,
    ) -> Result<Completion, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();

        let payload = json!({
            "model": self.model,
            "messages": messages,
        });
        let mut request = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(&payload).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(timeout_s),
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
                BackendError::Timeout(timeout_s)
            }
            other => BackendError::Transport(other.to_string()),
        })?;

        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http {
                status,
                body_excerpt: excerpt(&body),
            });
        }

        let value: serde_json::Value = serde_json::from_str(&body)
            .map_err(|e| BackendError::Protocol(format!("invalid JSON response: {e}")))?;
        let content = value["choices"][0]["message"]["content"]
            .as_str()
            .or_else(|| value["content"].as_str())
            .ok_or_else(|| {
                BackendError::Protocol("response carries no assistant content".to_string())
            })?
            .to_string();

        let usage = match value.get("usage") {
            Some(u) if u.is_object() => {
                let field = |k: &str| u.get(k).and_then(|v| v.as_u64());
                let prompt = field("prompt_tokens").unwrap_or(0);
                let completion = field("completion_tokens").unwrap_or(0);
                match field("total_tokens") {
                    Some(total) => TokenUsage {
                        prompt,
                        completion,
                        total,
                    },
                    None if prompt + completion > 0 => TokenUsage {
                        prompt,
                        completion,
                        total: prompt + completion,
                    },
                    // no usable usage: fall back to the documented estimate
                    None => estimated_usage(messages, &content),
                }
            }
            _ => estimated_usage(messages, &content),
        };

        Ok(Completion { content, usage })
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}
