use std::time::Duration;

use super::{tokenize, Essay, GoldSpan};
use crate::align::align_tokens;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("normalizer failed: {0}")]
pub struct NormalizeError(pub String);

/// A pure text-to-text rewrite applied to essays before they reach a model
/// (spelling correction, typically).
pub trait TextNormalizer: Send + Sync {
    fn normalize(&self, text: &str) -> Result<String, NormalizeError>;
}

impl<F> TextNormalizer for F
where
    F: Fn(&str) -> Result<String, NormalizeError> + Send + Sync,
{
    fn normalize(&self, text: &str) -> Result<String, NormalizeError> {
        self(text)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityNormalizer;

impl TextNormalizer for IdentityNormalizer {
    fn normalize(&self, text: &str) -> Result<String, NormalizeError> {
        Ok(text.to_string())
    }
}

/// Client for an external correction service: the request body is the plain text, the
/// response body is the corrected plain text.
#[derive(Debug, Clone)]
pub struct HttpNormalizer {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpNormalizer {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, NormalizeError> {
        let client =
            reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| NormalizeError(e.to_string()))?;
        Ok(Self { url: url.into(), client })
    }
}

impl TextNormalizer for HttpNormalizer {
    fn normalize(&self, text: &str) -> Result<String, NormalizeError> {
        let response = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "text/plain; charset=utf-8")
            .body(text.to_string())
            .send()
            .map_err(|e| NormalizeError(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(NormalizeError(format!("status {status}")));
        }
        response.text().map_err(|e| NormalizeError(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct NormalizedEssay {
    pub essay: Essay,
    /// Gold spans re-indexed onto the normalized tokens.
    pub spans: Vec<GoldSpan>,
    /// Spans whose text vanished under normalization (excluded from `spans`).
    pub degenerate: Vec<GoldSpan>,
    pub warnings: Vec<String>,
}

/// Applies `normalizer` to `raw` and re-projects `gold` (token ranges over the raw
/// whitespace tokens) onto the normalized tokens through a token alignment.
pub fn normalize_essay(id: &str, raw: &str, normalizer: &dyn TextNormalizer, gold: &[GoldSpan]) -> NormalizedEssay {
    let mut warnings = Vec::new();
    let normalized = match normalizer.normalize(raw) {
        Ok(text) => text,
        Err(e) => {
            warnings.push(format!("essay {id}: {e}; using the original text"));
            raw.to_string()
        }
    };

    if normalized == raw {
        let essay = Essay::with_normalized(id, raw.to_string(), normalized);
        return NormalizedEssay { essay, spans: gold.to_vec(), degenerate: Vec::new(), warnings };
    }

    let raw_tokens = tokenize(raw);
    let raw_texts: Vec<&str> = raw_tokens.iter().map(|t| t.text(raw)).collect();
    let essay = Essay::with_normalized(id, raw.to_string(), normalized);
    let norm_texts = essay.token_texts();
    let alignment = align_tokens(&norm_texts, &raw_texts);

    let mut spans = Vec::with_capacity(gold.len());
    let mut degenerate = Vec::new();
    for span in gold {
        let start = alignment.project(span.start_token);
        let end = alignment.project(span.end_token);
        let mut moved = span.clone();
        moved.start_token = start;
        moved.end_token = end.max(start);
        if moved.is_empty() {
            warnings.push(format!(
                "essay {id}: span {} ({}) is empty after normalization and was excluded",
                span.index, span.discourse_id
            ));
            degenerate.push(moved);
        } else {
            spans.push(moved);
        }
    }
    for (i, s) in spans.iter_mut().enumerate() {
        s.index = i;
    }
    NormalizedEssay { essay, spans, degenerate, warnings }
}
