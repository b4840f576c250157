//! Deterministic content-hash embedder: the test double for a real
//! vision-language embedding endpoint.
//!
//! Every input (text or image bytes) maps to a unit vector drawn from a
//! ChaCha stream keyed by SHA-256 of the content and the seed, so identical
//! content always embeds identically and distinct content is non-parallel
//! with overwhelming probability. Texts and images hash under different
//! domain prefixes, which makes the tau = 1.0 bypass behave as intended.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::backends::EmbedderBackend;
use crate::error::{Error, Result};
use crate::kfm::EmbeddingVector;

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Embedding(format!(
                "hash embedder needs dim >= 2, got {dim}"
            )));
        }
        Ok(HashEmbedder { dim, seed })
    }

    fn embed_bytes(&self, domain: &[u8], content: &[u8]) -> EmbeddingVector {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(domain);
        hasher.update(content);
        let key: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut values: Vec<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        // A zero draw is astronomically unlikely; fall back to a basis vector
        // rather than divide by zero.
        if norm == 0.0 {
            values[0] = 1.0;
        } else {
            for v in &mut values {
                *v /= norm;
            }
        }
        EmbeddingVector::new(values)
    }
}

impl EmbedderBackend for HashEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts
            .iter()
            .map(|t| self.embed_bytes(b"text:", t.as_bytes()))
            .collect())
    }

    fn embed_images(&self, images: &[Vec<u8>]) -> Result<Vec<EmbeddingVector>> {
        Ok(images
            .iter()
            .map(|bytes| self.embed_bytes(b"image:", bytes))
            .collect())
    }
}
