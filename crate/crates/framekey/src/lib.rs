//! Frame-index visual prompting and keyword-frame mapping for VideoLLMs.
//!
//! The toolkit renders sequential frame-number labels directly into the pixel
//! space of sampled video frames, binds query keywords to their most similar
//! frame via embedding cosine similarity, and rewrites the query with the
//! mapped frame indices before it is sent to a chat-style VideoLLM endpoint.
//!
//! Alongside the pipeline itself it ships three analysis instruments:
//!
//! * [`position_lab`] — rotary position-index assignment under temporal-only
//!   and full-collapse degradation, for 1D RoPE and M-RoPE layouts.
//! * [`probe`] — a synthetic frame-referencing benchmark (lookup and
//!   reverse-lookup over a marker frame) with exact and ±1 scoring.
//! * [`attention`] — layer-wise mean attention to image tokens computed from
//!   exported attention dumps, plus the VP vs no-VP relative-change statistic.
//!
//! Everything is desk-testable: deterministic mock backends close the loop
//! without any model endpoint, and the [`harness`] module orchestrates full
//! evaluation runs from manifests and a TOML config.

pub mod attention;
pub mod backends;
pub mod error;
pub mod frame_pipeline;
pub mod harness;
pub mod kfm;
pub mod position_lab;
pub mod probe;
pub mod prompting;
pub mod raster;
pub mod vp;

pub use error::{Error, Result};
