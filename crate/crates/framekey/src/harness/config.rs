//! Run configuration: TOML with `${VAR}` environment interpolation, plus
//! construction of the configured backends.

use std::path::Path;
use std::sync::Arc;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::http::{HttpEmbedder, RetryPolicy};
use crate::backends::{
    ChatVideoLlm, ChatVideoLlmConfig, EmbedderBackend, ExtractorBackend, HashEmbedder,
    LlmExtractor, MockDecoderModel, RuleExtractor, VideoLlmBackend,
};
use crate::error::{Error, Result};
use crate::kfm::Keyword;
use crate::prompting::DatasetStyle;
use crate::vp::VpConfig;

fn default_target_fps() -> f64 {
    1.0
}
fn default_cap() -> usize {
    64
}
fn default_min_frames() -> usize {
    3
}
fn default_in_flight() -> usize {
    4
}
fn default_tau() -> f64 {
    1.0
}
fn default_batch_size() -> usize {
    crate::backends::http::DEFAULT_EMBED_BATCH_SIZE
}
fn default_hash_dim() -> usize {
    64
}
fn default_max_tokens() -> u32 {
    256
}
fn default_temperature() -> f64 {
    0.0
}

/// Which frames of each video enter the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingConfig {
    /// Uniformly sample a fixed number of frames.
    Fixed { n: usize },
    /// Sample at `target_fps`, capped at `cap` frames.
    FpsCapped {
        #[serde(default = "default_target_fps")]
        target_fps: f64,
        #[serde(default = "default_cap")]
        cap: usize,
    },
    /// Sample a fraction of the frames (with a minimum floor), either of the
    /// raw frame list or of the fps-capped pool.
    Fraction {
        fraction: f64,
        #[serde(default = "default_min_frames")]
        min_frames: usize,
        #[serde(default)]
        pool: FractionPool,
        #[serde(default = "default_target_fps")]
        target_fps: f64,
        #[serde(default = "default_cap")]
        cap: usize,
    },
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig::FpsCapped {
            target_fps: default_target_fps(),
            cap: default_cap(),
        }
    }
}

/// The pool a fractional sample draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FractionPool {
    /// All frames listed in the manifest.
    #[default]
    Raw,
    /// The fps-capped candidate pool (the published 20% settings draw from
    /// the same pool as the 1 fps runs).
    FpsCapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    /// Deterministic content-hash embedder (desk-scale testing).
    Hash {
        #[serde(default = "default_hash_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    /// HTTP embedding endpoint speaking the documented wire protocol.
    Http {
        endpoint: String,
        #[serde(default)]
        auth_token: Option<String>,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default)]
        expected_dim: Option<usize>,
    },
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Hash {
            dim: default_hash_dim(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractorSpec {
    /// Deterministic pattern extractor.
    Rule,
    /// Chat-endpoint LLM extractor.
    Llm {
        endpoint: String,
        model: String,
        #[serde(default)]
        auth_token: Option<String>,
    },
    /// No extraction: the VP-only pipeline.
    None,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        ExtractorSpec::Rule
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// The closed-loop mock decoder.
    Mock,
    /// Chat-protocol VideoLLM endpoint.
    Chat {
        endpoint: String,
        model: String,
        #[serde(default)]
        auth_token: Option<String>,
        #[serde(default = "default_max_tokens")]
        max_tokens: u32,
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Mock
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KfmConfig {
    /// Mapping threshold tau in [-1, 1]; 1.0 bypasses mapping for backends
    /// whose text and image embeddings are never parallel.
    pub tau: f64,
    pub embedder: EmbedderSpec,
    pub extractor: ExtractorSpec,
}

impl Default for KfmConfig {
    fn default() -> Self {
        KfmConfig {
            tau: default_tau(),
            embedder: EmbedderSpec::default(),
            extractor: ExtractorSpec::default(),
        }
    }
}

/// Everything an evaluation run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub sampling: SamplingConfig,
    pub vp: VpConfig,
    pub kfm: KfmConfig,
    pub model: ModelSpec,
    pub prompt_profile: DatasetStyle,
    pub in_flight: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sampling: SamplingConfig::default(),
            vp: VpConfig::default(),
            kfm: KfmConfig::default(),
            model: ModelSpec::default(),
            prompt_profile: DatasetStyle::Generic,
            in_flight: default_in_flight(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.kfm.tau) {
            return Err(Error::Config(format!(
                "kfm.tau must be in [-1, 1], got {}",
                self.kfm.tau
            )));
        }
        if self.in_flight == 0 {
            return Err(Error::Config("in_flight must be >= 1".into()));
        }
        if let SamplingConfig::Fraction { fraction, .. } = self.sampling {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::Config(format!(
                    "sampling.fraction must be in (0, 1], got {fraction}"
                )));
            }
        }
        if self.vp.size_divisor == 0 {
            return Err(Error::Config("vp.size_divisor must be >= 1".into()));
        }
        Ok(())
    }
}

/// Load a run config from a TOML file, interpolating `${VAR}` references in
/// string values from the environment.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_run_config(&text)
        .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))
}

/// Parse a run config from TOML text.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
    interpolate_env(&mut value)?;
    let config: RunConfig = value
        .try_into()
        .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn env_ref_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex"))
}

fn interpolate_env(value: &mut toml::Value) -> Result<()> {
    match value {
        toml::Value::String(s) => {
            if env_ref_re().is_match(s) {
                let mut out = String::new();
                let mut last = 0;
                for caps in env_ref_re().captures_iter(&s.clone()) {
                    let whole = caps.get(0).unwrap();
                    let name = &caps[1];
                    let resolved = std::env::var(name).map_err(|_| {
                        Error::Config(format!("environment variable `{name}` is not set"))
                    })?;
                    out.push_str(&s[last..whole.start()]);
                    out.push_str(&resolved);
                    last = whole.end();
                }
                out.push_str(&s[last..]);
                *s = out;
            }
        }
        toml::Value::Array(items) => {
            for item in items {
                interpolate_env(item)?;
            }
        }
        toml::Value::Table(table) => {
            for (_, item) in table.iter_mut() {
                interpolate_env(item)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Extractor that always returns the empty list (the VP-only pipeline).
struct NullExtractor;

impl ExtractorBackend for NullExtractor {
    fn name(&self) -> &str {
        "none"
    }

    fn extract(&self, _question: &str, _style: DatasetStyle) -> Result<Vec<Keyword>> {
        Ok(Vec::new())
    }
}

/// The three constructed backends of a run.
pub struct Backends {
    pub embedder: Arc<dyn EmbedderBackend>,
    pub extractor: Arc<dyn ExtractorBackend>,
    pub model: Arc<dyn VideoLlmBackend>,
}

/// Build the configured backends. The mock model is constructed over the
/// run's VP config so it can decode the labels the renderer draws.
pub fn build_backends(config: &RunConfig) -> Result<Backends> {
    Ok(Backends {
        embedder: build_embedder(&config.kfm.embedder)?,
        extractor: build_extractor(&config.kfm.extractor)?,
        model: build_model(&config.model, &config.vp)?,
    })
}

pub fn build_embedder(spec: &EmbedderSpec) -> Result<Arc<dyn EmbedderBackend>> {
    Ok(match spec {
        EmbedderSpec::Hash { dim, seed } => Arc::new(HashEmbedder::new(*dim, *seed)?),
        EmbedderSpec::Http {
            endpoint,
            auth_token,
            batch_size,
            expected_dim,
        } => {
            let mut embedder = HttpEmbedder::over_http(endpoint.clone(), auth_token.clone())?
                .with_batch_size(*batch_size)
                .with_retry(RetryPolicy::default());
            if let Some(dim) = expected_dim {
                embedder = embedder.with_expected_dim(*dim);
            }
            Arc::new(embedder)
        }
    })
}

pub fn build_extractor(spec: &ExtractorSpec) -> Result<Arc<dyn ExtractorBackend>> {
    Ok(match spec {
        ExtractorSpec::Rule => Arc::new(RuleExtractor::new()),
        ExtractorSpec::Llm {
            endpoint,
            model,
            auth_token,
        } => Arc::new(LlmExtractor::over_http(
            endpoint.clone(),
            model.clone(),
            auth_token.clone(),
        )?),
        ExtractorSpec::None => Arc::new(NullExtractor),
    })
}

pub fn build_model(spec: &ModelSpec, vp: &VpConfig) -> Result<Arc<dyn VideoLlmBackend>> {
    Ok(match spec {
        ModelSpec::Mock => Arc::new(MockDecoderModel::with_default_marker(Some(vp.clone()))),
        ModelSpec::Chat {
            endpoint,
            model,
            auth_token,
            max_tokens,
            temperature,
        } => {
            let mut config = ChatVideoLlmConfig::new(endpoint.clone(), model.clone());
            config.max_tokens = *max_tokens;
            config.temperature = *temperature;
            Arc::new(ChatVideoLlm::over_http(config, auth_token.clone())?)
        }
    })
}
