//! Pluggable clients for the three external model roles: the embedder, the
//! keyword extractor, and the VideoLLM itself.
//!
//! Each role is a trait with an HTTP implementation speaking the wire
//! protocols documented in `docs/PROTOCOL.md` and a deterministic local
//! implementation (hash embedder, rule extractor, mock decoder) that closes
//! the loop for desk-scale tests without any endpoint.

mod chat_llm;
mod hash_embed;
pub mod http;
mod llm_extract;
mod mock_decoder;
mod rule_extract;

pub use chat_llm::{ChatVideoLlm, ChatVideoLlmConfig};
pub use hash_embed::HashEmbedder;
pub use llm_extract::{parse_keyword_list, LlmExtractor};
pub use mock_decoder::MockDecoderModel;
pub use rule_extract::RuleExtractor;

use crate::error::Result;
use crate::kfm::{EmbeddingVector, Keyword};
use crate::prompting::DatasetStyle;
use crate::vp::LabeledFrame;

/// Embeds texts and images into a shared vector space.
///
/// Backends must be deterministic: identical inputs yield identical vectors
/// within a process run.
pub trait EmbedderBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Declared vector dimension, once known. HTTP backends learn it from the
    /// first response.
    fn dim(&self) -> Option<usize>;

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    /// Embed encoded raster images (PNG bytes).
    fn embed_images(&self, images: &[Vec<u8>]) -> Result<Vec<EmbeddingVector>>;
}

/// Extracts key phrases from a question.
///
/// Returned keywords must be exact substrings of the question when they carry
/// a span; an empty list means nothing usable was found.
pub trait ExtractorBackend: Send + Sync {
    fn name(&self) -> &str;

    fn extract(&self, question: &str, style: DatasetStyle) -> Result<Vec<Keyword>>;
}

/// A chat-style VideoLLM: answers one prompt over an ordered frame sequence.
pub trait VideoLlmBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Answer `user_prompt` given the frames (in display-index order) and the
    /// system prompt. Stateless per call.
    fn answer(&self, system_prompt: &str, user_prompt: &str, frames: &[LabeledFrame])
        -> Result<String>;
}
