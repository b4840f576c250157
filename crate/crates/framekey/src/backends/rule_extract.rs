//! Deterministic pattern-based keyword extractor.
//!
//! Mirrors the behaviour the LLM extractor is prompted for on the common
//! temporal question shapes: clauses following "after"/"before", the two
//! sides of "between ... and ...", and quoted spans. Anything else yields an
//! empty list. All keywords are exact substrings of the question, with spans.

use std::sync::OnceLock;

use regex::Regex;

use crate::backends::ExtractorBackend;
use crate::error::Result;
use crate::kfm::Keyword;
use crate::prompting::DatasetStyle;

#[derive(Debug, Default, Clone)]
pub struct RuleExtractor;

impl RuleExtractor {
    pub fn new() -> Self {
        RuleExtractor
    }
}

fn quoted_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"'([^']+)'|"([^"]+)""#).expect("static regex"))
}

fn between_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Clause characters stop at commas and sentence-terminal punctuation;
    // periods inside the clause (e.g. "Mr. Bean") survive.
    RE.get_or_init(|| {
        Regex::new(r"(?i)\bbetween\b\s+([^,?!;]+?)\s+\band\b\s+([^,?!;]+)").expect("static regex")
    })
}

fn after_before_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:after|before)\b\s+([^,?!;]+)").expect("static regex"))
}

/// Trim clause-final punctuation and whitespace, returning the shrunken span.
fn trim_span(question: &str, start: usize, end: usize) -> Option<(usize, usize)> {
    let trimmed = question[start..end].trim_end_matches(['.', ' ']);
    if trimmed.is_empty() {
        return None;
    }
    Some((start, start + trimmed.len()))
}

impl ExtractorBackend for RuleExtractor {
    fn name(&self) -> &str {
        "rule"
    }

    fn extract(&self, question: &str, _style: DatasetStyle) -> Result<Vec<Keyword>> {
        let mut spans: Vec<(usize, usize)> = Vec::new();

        for caps in quoted_re().captures_iter(question) {
            if let Some(m) = caps.get(1).or_else(|| caps.get(2)) {
                if let Some(span) = trim_span(question, m.start(), m.end()) {
                    spans.push(span);
                }
            }
        }
        if let Some(caps) = between_re().captures(question) {
            for i in [1, 2] {
                if let Some(m) = caps.get(i) {
                    if let Some(span) = trim_span(question, m.start(), m.end()) {
                        spans.push(span);
                    }
                }
            }
        } else {
            for caps in after_before_re().captures_iter(question) {
                if let Some(m) = caps.get(1) {
                    if let Some(span) = trim_span(question, m.start(), m.end()) {
                        spans.push(span);
                    }
                }
            }
        }

        spans.sort();
        spans.dedup();
        Ok(spans
            .into_iter()
            .map(|(start, end)| Keyword::with_span(&question[start..end], start, end))
            .collect())
    }
}
