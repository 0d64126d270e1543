//! Essay corpus: label vocabularies, essays with token offsets, gold argument spans,
//! and ingestion of the Feedback Prize effectiveness annotation table.

mod labels;
mod load;
mod normalize;
mod text;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use labels::{ArgType, Label, LabelParseError, QualityLabel};
pub use load::{
    load_corpus, CorpusError, EssayIssue, LoadOptions, LoadReport, LoadedCorpus, OrphanRow, RowIssue, SplitSummary,
};
pub use normalize::{
    normalize_essay, HttpNormalizer, IdentityNormalizer, NormalizeError, NormalizedEssay, TextNormalizer,
};
pub use text::{collapse_whitespace, locate_span, tokenize, LocateError, Token};

/// Essay text plus its whitespace tokens over the normalized text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Essay {
    pub id: String,
    pub raw_text: String,
    pub normalized_text: String,
    pub tokens: Vec<Token>,
}

impl Essay {
    /// An essay whose normalized text is its raw text.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let raw_text = text.into();
        Self::with_normalized(id, raw_text.clone(), raw_text)
    }

    pub fn with_normalized(id: impl Into<String>, raw_text: String, normalized_text: String) -> Self {
        let tokens = tokenize(&normalized_text);
        Self { id: id.into(), raw_text, normalized_text, tokens }
    }

    pub fn text(&self) -> &str {
        &self.normalized_text
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn token_text(&self, index: usize) -> &str {
        self.tokens[index].text(&self.normalized_text)
    }

    pub fn token_texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text(&self.normalized_text)).collect()
    }

    /// Byte range of the normalized text from the first to the last token of `tokens`.
    pub fn byte_range(&self, tokens: Range<usize>) -> Range<usize> {
        assert!(tokens.start < tokens.end && tokens.end <= self.tokens.len(), "bad token range {tokens:?}");
        self.tokens[tokens.start].start..self.tokens[tokens.end - 1].end
    }

    pub fn span_text(&self, tokens: Range<usize>) -> &str {
        &self.normalized_text[self.byte_range(tokens)]
    }
}

/// One annotated argument component, as a half-open token range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub essay_id: String,
    pub discourse_id: String,
    pub index: usize,
    pub start_token: usize,
    pub end_token: usize,
    pub arg_type: ArgType,
    pub quality: QualityLabel,
}

impl GoldSpan {
    pub fn tokens(&self) -> Range<usize> {
        self.start_token..self.end_token
    }

    pub fn len(&self) -> usize {
        self.end_token - self.start_token
    }

    pub fn is_empty(&self) -> bool {
        self.end_token <= self.start_token
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedEssay {
    pub essay: Essay,
    pub spans: Vec<GoldSpan>,
}

impl AnnotatedEssay {
    pub fn id(&self) -> &str {
        &self.essay.id
    }

    pub fn gold_ranges(&self) -> Vec<Range<usize>> {
        self.spans.iter().map(GoldSpan::tokens).collect()
    }

    /// The gold spans closed into a partition of the token range: each segment ends where
    /// its gold span ends, unannotated tokens join the following segment, and the last
    /// segment runs to the end of the essay. This is the segmentation a SEP rendering of
    /// the gold spans encodes.
    pub fn gold_partition(&self) -> Vec<Range<usize>> {
        let n = self.essay.token_count();
        let mut ends: Vec<usize> = self.spans.iter().map(|s| s.end_token).collect();
        match ends.last_mut() {
            Some(last) => *last = n,
            None if n > 0 => ends.push(n),
            None => {}
        }
        partition_from_ends(&ends)
    }

    /// Checks the span invariants: sorted, disjoint, non-empty, inside the essay.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.essay.token_count();
        let mut prev_end = 0;
        for (i, s) in self.spans.iter().enumerate() {
            if s.is_empty() {
                return Err(format!("span {i} is empty"));
            }
            if s.end_token > n {
                return Err(format!("span {i} ends at token {} beyond {n}", s.end_token));
            }
            if s.start_token < prev_end {
                return Err(format!("span {i} overlaps or precedes its predecessor"));
            }
            prev_end = s.end_token;
        }
        Ok(())
    }
}

/// Half-open ranges `[0, e0), [e0, e1), ...` from strictly increasing end points.
pub fn partition_from_ends(ends: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    ends.iter()
        .map(|&e| {
            let r = start..e;
            start = e;
            r
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Ok(SplitName::Train),
            "validation" | "valid" | "val" | "dev" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub name: SplitName,
    pub essays: Vec<AnnotatedEssay>,
}

impl CorpusSplit {
    pub fn span_count(&self) -> usize {
        self.essays.iter().map(|e| e.spans.len()).sum()
    }

    pub fn essay(&self, id: &str) -> Option<&AnnotatedEssay> {
        self.essays.iter().find(|e| e.essay.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize) -> GoldSpan {
        GoldSpan {
            essay_id: "e".into(),
            discourse_id: format!("d{start}"),
            index: 0,
            start_token: start,
            end_token: end,
            arg_type: ArgType::Claim,
            quality: QualityLabel::Adequate,
        }
    }

    #[test]
    fn gold_partition_closes_gaps() {
        let essay = Essay::new("e", "a b c d e f g h");
        let ann = AnnotatedEssay { essay, spans: vec![span(1, 3), span(4, 6)] };
        assert_eq!(ann.gold_partition(), vec![0..3, 3..8]);
        assert!(ann.validate().is_ok());
    }

    #[test]
    fn validate_rejects_overlap() {
        let essay = Essay::new("e", "a b c d");
        let ann = AnnotatedEssay { essay, spans: vec![span(0, 3), span(2, 4)] };
        assert!(ann.validate().is_err());
    }

    #[test]
    fn span_text_uses_token_offsets() {
        let essay = Essay::new("e", "Hi, i'm  Isaac.\nBye");
        assert_eq!(essay.span_text(1..3), "i'm  Isaac.");
        assert_eq!(essay.token_count(), 4);
    }

    #[test]
    fn split_names() {
        assert_eq!("VALID".parse::<SplitName>().unwrap(), SplitName::Validation);
        assert!("holdout".parse::<SplitName>().is_err());
    }
}
