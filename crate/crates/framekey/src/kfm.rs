//! Keyword-frame mapping: bind query keywords to their most similar frame.
//!
//! Each extracted keyword is embedded alongside the VP-injected frames in a
//! shared space; the keyword maps to the argmax-similarity frame when the
//! score clears the threshold tau, and the question text is rewritten with
//! the mapped display indices ("... picks up the broom (frame 5) ...").

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A key phrase extracted from a question. `span` holds byte offsets into the
/// source question when the phrase was located there (extractors must return
/// exact substrings).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyword {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
}

impl Keyword {
    pub fn new(text: impl Into<String>) -> Self {
        Keyword {
            text: text.into(),
            span: None,
        }
    }

    pub fn with_span(text: impl Into<String>, start: usize, end: usize) -> Self {
        Keyword {
            text: text.into(),
            span: Some((start, end)),
        }
    }
}

/// A fixed-length real vector produced by an embedding backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// The decision for one keyword: the best frame's 1-based display index and
/// score, and whether the score cleared tau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    pub keyword: Keyword,
    pub frame_display_index: Option<usize>,
    pub score: f64,
    pub mapped: bool,
}

/// Cosine similarity `dot(u, v) / (|u| * |v|)`.
///
/// Bitwise-identical vectors return exactly 1.0; otherwise the raw quotient
/// is returned (within rounding of [-1, 1]).
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch(format!(
            "cosine over dims {} and {}",
            u.dim(),
            v.dim()
        )));
    }
    if u.dim() == 0 {
        return Err(Error::Embedding("cosine over empty vectors".into()));
    }
    if u.values == v.values {
        return Ok(1.0);
    }
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Embedding("cosine over a zero-norm vector".into()));
    }
    if !(nu.is_finite() && nv.is_finite()) {
        return Err(Error::Embedding("cosine over a non-finite vector".into()));
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok(dot / (nu * nv))
}

/// Pairwise similarities, one row per keyword: entry `(j, i)` is the cosine
/// of keyword `j` against frame `i`.
pub fn similarity_matrix(
    frame_embs: &[EmbeddingVector],
    keyword_embs: &[EmbeddingVector],
) -> Result<Vec<Vec<f64>>> {
    keyword_embs
        .iter()
        .map(|kw| {
            frame_embs
                .iter()
                .map(|frame| cosine_similarity(frame, kw))
                .collect()
        })
        .collect()
}

/// Argmax over a similarity row: the 1-based index and score of the best
/// frame, ties broken toward the lowest index.
pub fn best_frame(row: &[f64]) -> Result<(usize, f64)> {
    if row.is_empty() {
        return Err(Error::Embedding("argmax over an empty similarity row".into()));
    }
    let mut best = (1usize, row[0]);
    for (i, &score) in row.iter().enumerate() {
        if !score.is_finite() {
            return Err(Error::Embedding(format!(
                "non-finite similarity {score} at index {i}"
            )));
        }
        if score > best.1 {
            best = (i + 1, score);
        }
    }
    Ok(best)
}

/// Map each keyword to its best frame, keeping the mapping only when the
/// score is >= tau. Order of the input keywords is preserved.
pub fn map_keywords(
    keywords: &[Keyword],
    frame_embs: &[EmbeddingVector],
    keyword_embs: &[EmbeddingVector],
    tau: f64,
) -> Result<Vec<Mapping>> {
    if keywords.len() != keyword_embs.len() {
        return Err(Error::Embedding(format!(
            "{} keywords but {} keyword embeddings",
            keywords.len(),
            keyword_embs.len()
        )));
    }
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::Embedding(format!("tau must be in [-1, 1], got {tau}")));
    }
    let matrix = similarity_matrix(frame_embs, keyword_embs)?;
    keywords
        .iter()
        .zip(&matrix)
        .map(|(keyword, row)| {
            let (index, score) = best_frame(row)?;
            let mapped = score >= tau;
            Ok(Mapping {
                keyword: keyword.clone(),
                frame_display_index: mapped.then_some(index),
                score,
                mapped,
            })
        })
        .collect()
}

/// The rewritten question plus any span-conflict warnings recorded on the way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedQuestion {
    pub text: String,
    pub warnings: Vec<String>,
}

/// Insert " (frame K)" after each mapped keyword's occurrence in the
/// question.
///
/// Spans are taken from the keyword (or resolved to the first case-sensitive
/// occurrence), insertions are applied right-to-left so earlier offsets stay
/// valid, duplicate spans are inserted once, and overlapping spans keep the
/// earlier mapping. Mapped keywords that cannot be located contribute a
/// trailing note sentence instead. Unmapped keywords leave the question
/// untouched.
pub fn insert_index(question: &str, mappings: &[Mapping]) -> AugmentedQuestion {
    let mut warnings = Vec::new();
    let mut accepted: Vec<(usize, usize, usize)> = Vec::new(); // (start, end, frame)
    let mut notes: Vec<(String, usize)> = Vec::new();

    for mapping in mappings {
        if !mapping.mapped {
            continue;
        }
        let frame = mapping
            .frame_display_index
            .expect("mapped mappings carry a frame index");
        let span = resolve_span(question, &mapping.keyword);
        let Some((start, end)) = span else {
            notes.push((mapping.keyword.text.clone(), frame));
            continue;
        };
        if let Some(&(s0, e0, f0)) = accepted.iter().find(|&&(s, e, _)| s == start && e == end) {
            if f0 != frame {
                warnings.push(format!(
                    "keyword `{}` shares the span {}..{} already annotated with frame {}; \
                     keeping the earlier mapping",
                    mapping.keyword.text, s0, e0, f0
                ));
            }
            continue;
        }
        if accepted.iter().any(|&(s, e, _)| start < e && s < end) {
            warnings.push(format!(
                "keyword `{}` at {}..{} overlaps an earlier annotation; skipped",
                mapping.keyword.text, start, end
            ));
            continue;
        }
        accepted.push((start, end, frame));
    }

    let mut text = question.to_string();
    accepted.sort_by_key(|&(_, end, _)| std::cmp::Reverse(end));
    for (_, end, frame) in accepted {
        text.insert_str(end, &format!(" (frame {frame})"));
    }
    for (kw, frame) in notes {
        text.push_str(&format!(" Note: '{kw}' corresponds to frame {frame}."));
    }

    AugmentedQuestion { text, warnings }
}

/// The keyword's span if valid, else its first case-sensitive occurrence.
fn resolve_span(question: &str, keyword: &Keyword) -> Option<(usize, usize)> {
    if let Some((start, end)) = keyword.span {
        if question.get(start..end) == Some(keyword.text.as_str()) {
            return Some((start, end));
        }
    }
    question
        .find(&keyword.text)
        .map(|start| (start, start + keyword.text.len()))
}
