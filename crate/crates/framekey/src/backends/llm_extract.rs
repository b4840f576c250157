//! LLM-backed keyword extractor.
//!
//! Sends the fixed extractor system prompt plus the shared rules and the
//! dataset profile's few-shot examples over the chat protocol, then parses
//! the returned list literal. Keywords that violate the exact-substring rule
//! are dropped with a warning; unparseable responses fall back to the empty
//! list.

use crate::backends::chat_llm::{ChatMessage, ChatRequest, ChatResponse, ContentPart};
use crate::backends::http::{HttpJsonTransport, ReqwestTransport, RetryPolicy};
use crate::backends::ExtractorBackend;
use crate::error::{Error, Result};
use crate::kfm::Keyword;
use crate::prompting::{extractor_prompt, DatasetStyle, PromptProfile};
use crate::vp::VpPosition;

pub struct LlmExtractor {
    endpoint: String,
    model_name: String,
    transport: Box<dyn HttpJsonTransport>,
    retry: RetryPolicy,
    max_tokens: u32,
    temperature: f64,
}

impl LlmExtractor {
    pub fn new(
        endpoint: impl Into<String>,
        model_name: impl Into<String>,
        transport: Box<dyn HttpJsonTransport>,
    ) -> Self {
        LlmExtractor {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            transport,
            retry: RetryPolicy::default(),
            max_tokens: 256,
            temperature: 0.0,
        }
    }

    pub fn over_http(
        endpoint: impl Into<String>,
        model_name: impl Into<String>,
        auth_token: Option<String>,
    ) -> Result<Self> {
        Ok(Self::new(
            endpoint,
            model_name,
            Box::new(ReqwestTransport::new(auth_token)?),
        ))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// The exact chat request for a question under a dataset profile.
    pub fn build_request(&self, question: &str, style: DatasetStyle) -> ChatRequest {
        // The extractor prompt depends only on the dataset style; the VP
        // position plays no part in it.
        let profile = PromptProfile::new(style, VpPosition::BottomLeft);
        let (system, user) = extractor_prompt(&profile, question);
        ChatRequest {
            model: self.model_name.clone(),
            messages: vec![
                ChatMessage::system(system),
                ChatMessage::user(vec![ContentPart::Text { text: user }]),
            ],
            max_tokens: self.max_tokens,
            temperature: self.temperature,
        }
    }
}

impl ExtractorBackend for LlmExtractor {
    fn name(&self) -> &str {
        "llm"
    }

    fn extract(&self, question: &str, style: DatasetStyle) -> Result<Vec<Keyword>> {
        let request = self.build_request(question, style);
        let body = serde_json::to_value(&request)?;
        let value =
            self.retry
                .post_with_retries(self.transport.as_ref(), "llm-extractor", &self.endpoint, &body)?;
        let response: ChatResponse = serde_json::from_value(value).map_err(|e| Error::Backend {
            backend: "llm-extractor".into(),
            message: format!("malformed chat response: {e}"),
        })?;
        let Some(phrases) = parse_keyword_list(&response.text) else {
            log::warn!(
                "llm-extractor returned an unparseable list for question `{question}`: \
                 {:?}; falling back to no keywords",
                response.text
            );
            return Ok(Vec::new());
        };
        Ok(resolve_keywords(question, phrases))
    }
}

/// Locate each phrase in the question (first case-sensitive occurrence),
/// dropping phrases that are not exact substrings.
fn resolve_keywords(question: &str, phrases: Vec<String>) -> Vec<Keyword> {
    phrases
        .into_iter()
        .filter_map(|text| {
            if text.is_empty() {
                return None;
            }
            match question.find(&text) {
                Some(start) => Some(Keyword::with_span(&text, start, start + text.len())),
                None => {
                    log::warn!(
                        "llm-extractor keyword `{text}` is not an exact substring of the \
                         question; dropped"
                    );
                    None
                }
            }
        })
        .collect()
}

/// Parse a bracketed, comma-separated list of quoted strings (`[]`,
/// `["a", 'b']`). Returns `None` for anything else.
pub fn parse_keyword_list(text: &str) -> Option<Vec<String>> {
    let start = text.find('[')?;
    let bytes = text.as_bytes();
    let mut items = Vec::new();
    let mut i = start + 1;
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        match bytes.get(i)? {
            b']' => return Some(items),
            quote @ (b'"' | b'\'') => {
                let quote = *quote;
                i += 1;
                let mut item = String::new();
                loop {
                    match bytes.get(i)? {
                        b'\\' => {
                            let escaped = *bytes.get(i + 1)?;
                            if !matches!(escaped, b'"' | b'\'' | b'\\') {
                                return None;
                            }
                            item.push(escaped as char);
                            i += 2;
                        }
                        &c if c == quote => {
                            i += 1;
                            break;
                        }
                        _ => {
                            // Advance one UTF-8 character.
                            let ch = text[i..].chars().next()?;
                            item.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                items.push(item);
                while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                match bytes.get(i)? {
                    b',' => i += 1,
                    b']' => return Some(items),
                    _ => return None,
                }
            }
            _ => return None,
        }
    }
}
