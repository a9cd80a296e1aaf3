//! Chat-completions HTTP client with base64 image parts.

use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};

use super::{GatewayConfig, MllmBackend, MllmError, MllmRequest, MllmResponse, Usage};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "MLLM_API_KEY";

pub struct LiveBackend {
    endpoint_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(config: &GatewayConfig, api_key: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_seconds))
            .build();
        Self {
            endpoint_url: config.endpoint_url.clone(),
            api_key: api_key.into(),
            agent,
        }
    }

    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(config: &GatewayConfig) -> Result<Self, MllmError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| MllmError::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(config, key))
    }
}

/// Request body: one user message, images first, then the prompt text.
pub fn chat_body(req: &MllmRequest) -> Value {
    let mut content: Vec<Value> = req
        .images
        .iter()
        .map(|img| {
            let data = base64::engine::general_purpose::STANDARD.encode(&img.bytes);
            json!({
                "type": "image_url",
                "image_url": { "url": format!("data:{};base64,{data}", img.mime) }
            })
        })
        .collect();
    if !req.text.is_empty() {
        content.push(json!({ "type": "text", "text": req.text }));
    }
    json!({
        "model": req.model_tag,
        "messages": [{ "role": "user", "content": content }],
        "max_tokens": req.max_output_tokens,
        "temperature": req.temperature,
    })
}

/// Extracts the first choice's text and token usage.
pub fn parse_reply(body: &str) -> Result<(String, Usage), MllmError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| MllmError::Malformed(format!("not JSON: {e}")))?;
    let content = &v["choices"][0]["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => {
            return Err(MllmError::Malformed(
                "missing choices[0].message.content".into(),
            ))
        }
    };
    let usage = Usage {
        input_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        output_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    };
    Ok((text, usage))
}

fn transport_error(err: &ureq::Transport) -> MllmError {
    let msg = err.to_string();
    let timed_out = {
        let lower = msg.to_ascii_lowercase();
        lower.contains("timed out") || lower.contains("timeout")
    };
    if timed_out {
        MllmError::Timeout(msg)
    } else {
        MllmError::Transport(msg)
    }
}

impl MllmBackend for LiveBackend {
    fn call(&self, req: &MllmRequest) -> Result<MllmResponse, MllmError> {
        let body = chat_body(req).to_string();
        let started = Instant::now();
        let result = self
            .agent
            .post(&self.endpoint_url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .set("Content-Type", "application/json")
            .send_string(&body);
        let reply = match result {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| MllmError::Transport(e.to_string()))?,
            Err(ureq::Error::Status(status, resp)) => {
                let message = resp.into_string().unwrap_or_default();
                return Err(MllmError::from_status(status, message));
            }
            Err(ureq::Error::Transport(t)) => return Err(transport_error(&t)),
        };
        let (text, usage) = parse_reply(&reply)?;
        Ok(MllmResponse {
            text,
            model_tag: req.model_tag.clone(),
            usage,
            latency: started.elapsed(),
            attempts: 0,
        })
    }
}
