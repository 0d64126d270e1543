//! Whitespace tokenization and whitespace-tolerant span location.
//!
//! All offsets are byte offsets into the UTF-8 text they were computed on.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// A maximal run of non-whitespace characters, as a half-open byte range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

/// Splits on Unicode whitespace.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push(Token { start: s, end: i });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token { start: s, end: text.len() });
    }
    tokens
}

/// Collapses every whitespace run to one space and trims both ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LocateError {
    #[error("discourse text not found in essay")]
    NotLocated,
    #[error("search offset {0} is outside the essay")]
    OffsetOutOfRange(usize),
}

/// Whitespace-collapsed view of a text with a map back to original byte offsets.
struct CollapsedText {
    text: String,
    /// For every byte of `text`: start of the originating char (or whitespace run).
    orig_start: Vec<usize>,
    /// For every byte of `text`: end of the originating char (or whitespace run).
    orig_end: Vec<usize>,
}

impl CollapsedText {
    fn new(source: &str) -> Self {
        let mut text = String::with_capacity(source.len());
        let mut orig_start = Vec::with_capacity(source.len());
        let mut orig_end = Vec::with_capacity(source.len());
        let mut chars = source.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if c.is_whitespace() {
                let mut end = i + c.len_utf8();
                while let Some(&(j, d)) = chars.peek() {
                    if !d.is_whitespace() {
                        break;
                    }
                    end = j + d.len_utf8();
                    chars.next();
                }
                text.push(' ');
                orig_start.push(i);
                orig_end.push(end);
            } else {
                let end = i + c.len_utf8();
                text.push(c);
                for _ in 0..c.len_utf8() {
                    orig_start.push(i);
                    orig_end.push(end);
                }
            }
        }
        Self { text, orig_start, orig_end }
    }
}

/// Finds the first occurrence of `needle` in `haystack` at or after byte offset `search_from`,
/// treating any run of whitespace as equal to any other run. Leading and trailing whitespace
/// of `needle` is ignored. Returns the matched byte range of `haystack`.
pub fn locate_span(haystack: &str, needle: &str, search_from: usize) -> Result<Range<usize>, LocateError> {
    if search_from > haystack.len() {
        return Err(LocateError::OffsetOutOfRange(search_from));
    }
    let target = collapse_whitespace(needle);
    if target.is_empty() {
        return Err(LocateError::NotLocated);
    }
    let hay = CollapsedText::new(haystack);
    let from = hay.orig_start.partition_point(|&s| s < search_from);
    let mut cursor = from;
    while cursor <= hay.text.len() {
        let Some(found) = hay.text[cursor..].find(&target) else { break };
        let start = cursor + found;
        let last = start + target.len() - 1;
        // A collapsed leading space may begin before `search_from`.
        let orig_start = hay.orig_start[start];
        if orig_start >= search_from {
            return Ok(orig_start..hay.orig_end[last]);
        }
        cursor = start + 1;
        while cursor < hay.text.len() && !hay.text.is_char_boundary(cursor) {
            cursor += 1;
        }
    }
    Err(LocateError::NotLocated)
}
