//! Adapter for OpenAI-compatible `/chat/completions` endpoints.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{Backend, BackendFailure, Completion, RenderedPrompt, IMAGE_MARKER};

#[derive(Debug, Clone)]
pub struct OpenAiChatBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
}

impl OpenAiChatBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
        temperature: f64,
    ) -> Result<Self, reqwest::Error> {
        let client = reqwest::Client::builder().timeout(timeout).build()?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            temperature,
        })
    }

    /// Request body: text and images interleaved in marker order.
    pub fn request_body(&self, prompt: &RenderedPrompt) -> Value {
        let mut parts = Vec::new();
        let mut images = prompt.images.iter();
        for (i, chunk) in prompt.text.split(IMAGE_MARKER).enumerate() {
            if i > 0 {
                if let Some(img) = images.next() {
                    let data = base64::engine::general_purpose::STANDARD.encode(img.png.as_slice());
                    parts.push(json!({
                        "type": "image_url",
                        "image_url": { "url": format!("data:image/png;base64,{data}") }
                    }));
                }
            }
            if !chunk.is_empty() {
                parts.push(json!({ "type": "text", "text": chunk }));
            }
        }
        json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": parts }],
            "max_tokens": prompt.max_output_tokens,
            "temperature": self.temperature,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

#[async_trait]
impl Backend for OpenAiChatBackend {
    async fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, BackendFailure> {
        let started = Instant::now();
        let mut req = self.client.post(&self.endpoint).json(&self.request_body(prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| BackendFailure {
            transient: e.is_timeout() || e.is_connect() || e.is_request(),
            message: e.to_string(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            let message = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
            return Err(BackendFailure {
                transient: status.as_u16() == 429 || status.is_server_error(),
                message,
            });
        }
        let parsed: ChatResponse = resp
            .json()
            .await
            .map_err(|e| BackendFailure::permanent(format!("malformed response: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendFailure::permanent("response has no choices"))?;
        Ok(Completion {
            text,
            input_tokens: parsed.usage.as_ref().and_then(|u| u.prompt_tokens),
            output_tokens: parsed.usage.as_ref().and_then(|u| u.completion_tokens),
            latency_seconds: Some(started.elapsed().as_secs_f64()),
        })
    }
}
