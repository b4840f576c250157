//! Chat-protocol VideoLLM client.
//!
//! One request per question: a system message, then a user message carrying
//! the labeled frames (base64 PNG, display order) followed by the augmented
//! prompt text. The wire format is documented in `docs/PROTOCOL.md`.

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::backends::http::{HttpJsonTransport, ReqwestTransport, RetryPolicy};
use crate::backends::VideoLlmBackend;
use crate::error::{Error, Result};
use crate::vp::LabeledFrame;

/// One part of a chat message: text or an inline base64 raster image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    Image { data: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: vec![ContentPart::Text { text: text.into() }],
        }
    }

    pub fn user(content: Vec<ContentPart>) -> Self {
        ChatMessage {
            role: "user".into(),
            content,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct ChatVideoLlmConfig {
    pub endpoint: String,
    pub model_name: String,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Hard cap on the serialized request size.
    pub max_payload_bytes: usize,
}

impl ChatVideoLlmConfig {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        ChatVideoLlmConfig {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            max_tokens: 256,
            temperature: 0.0,
            max_payload_bytes: 64 * 1024 * 1024,
        }
    }
}

/// VideoLLM backend over the chat wire protocol.
pub struct ChatVideoLlm {
    config: ChatVideoLlmConfig,
    transport: Box<dyn HttpJsonTransport>,
    retry: RetryPolicy,
}

impl ChatVideoLlm {
    pub fn new(config: ChatVideoLlmConfig, transport: Box<dyn HttpJsonTransport>) -> Self {
        ChatVideoLlm {
            config,
            transport,
            retry: RetryPolicy::default(),
        }
    }

    pub fn over_http(config: ChatVideoLlmConfig, auth_token: Option<String>) -> Result<Self> {
        let transport = Box::new(ReqwestTransport::new(auth_token)?);
        Ok(Self::new(config, transport))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// The exact request for a (system, user, frames) triple.
    pub fn build_request(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        frames: &[LabeledFrame],
    ) -> Result<ChatRequest> {
        if frames.is_empty() {
            return Err(Error::Backend {
                backend: "chat-videollm".into(),
                message: "a video question requires at least one frame".into(),
            });
        }
        let mut content = Vec::with_capacity(frames.len() + 1);
        for frame in frames {
            let png = frame.to_png()?;
            content.push(ContentPart::Image {
                data: base64::engine::general_purpose::STANDARD.encode(png),
            });
        }
        content.push(ContentPart::Text {
            text: user_prompt.to_string(),
        });
        Ok(ChatRequest {
            model: self.config.model_name.clone(),
            messages: vec![ChatMessage::system(system_prompt), ChatMessage::user(content)],
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature,
        })
    }
}

impl VideoLlmBackend for ChatVideoLlm {
    fn name(&self) -> &str {
        "chat"
    }

    fn answer(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        frames: &[LabeledFrame],
    ) -> Result<String> {
        let request = self.build_request(system_prompt, user_prompt, frames)?;
        let body = serde_json::to_value(&request)?;
        let payload_bytes = body.to_string().len();
        if payload_bytes > self.config.max_payload_bytes {
            return Err(Error::Backend {
                backend: "chat-videollm".into(),
                message: format!(
                    "payload of {payload_bytes} bytes over {} frames exceeds the {} byte limit",
                    frames.len(),
                    self.config.max_payload_bytes
                ),
            });
        }
        let value = self.retry.post_with_retries(
            self.transport.as_ref(),
            "chat-videollm",
            &self.config.endpoint,
            &body,
        )?;
        let response: ChatResponse = serde_json::from_value(value).map_err(|e| Error::Backend {
            backend: "chat-videollm".into(),
            message: format!("malformed chat response: {e}"),
        })?;
        Ok(response.text)
    }
}
