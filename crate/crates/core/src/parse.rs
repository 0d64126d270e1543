//! Validation and parsing of model outputs: label objects, label-interleaved essays, and
//! SEP-segmented essays aligned back onto the original tokens.

use std::fmt;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::align::align_tokens;
use crate::corpus::{partition_from_ends, AnnotatedEssay, ArgType, Essay, Label, QualityLabel};
use crate::prompt::{PromptMode, TaskKind, SEP_PATTERN};

/// Segmentation output is rejected when aligning it to the essay takes more edit
/// operations than this fraction of the essay's tokens.
pub const MAX_EDIT_RATIO: f64 = 0.4;

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<([^<>]*)>").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelAnswer {
    Type { arg_type: ArgType },
    Quality { quality: QualityLabel },
    Both { arg_type: ArgType, quality: QualityLabel },
}

impl LabelAnswer {
    /// The part of a full annotation a classification task asks for.
    pub fn for_task(task: TaskKind, arg_type: ArgType, quality: QualityLabel) -> Self {
        match task {
            TaskKind::TypeOnly => Self::Type { arg_type },
            TaskKind::QualityOnly => Self::Quality { quality },
            TaskKind::TypeAndQuality | TaskKind::Segmentation => Self::Both { arg_type, quality },
        }
    }

    pub fn arg_type(&self) -> Option<ArgType> {
        match *self {
            Self::Type { arg_type } | Self::Both { arg_type, .. } => Some(arg_type),
            Self::Quality { .. } => None,
        }
    }

    pub fn quality(&self) -> Option<QualityLabel> {
        match *self {
            Self::Quality { quality } | Self::Both { quality, .. } => Some(quality),
            Self::Type { .. } => None,
        }
    }

    fn names(&self) -> Vec<&'static str> {
        self.arg_type().map(|t| t.name()).into_iter().chain(self.quality().map(|q| q.name())).collect()
    }

    /// The JSON answer object a few-shot prompt asks for.
    pub fn to_object(&self, task: TaskKind) -> String {
        let key = task.answer_key().unwrap_or("TYPE AND QUALITY");
        serde_json::json!({ key: self.names() }).to_string()
    }

    /// The inline marker used in interleaved renderings, e.g. `<Claim, Adequate>`.
    pub fn marker(&self) -> String {
        format!("<{}>", self.names().join(", "))
    }
}

impl fmt::Display for LabelAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("format: {0}")]
    Format(String),
    #[error("expected key {expected:?}, found {found:?}")]
    Key { expected: &'static str, found: Vec<String> },
    #[error("label: {0}")]
    Label(String),
    #[error("expected {expected} label(s), found {found}")]
    Arity { expected: usize, found: usize },
    #[error("alignment needs {edits} edits for {tokens} tokens (budget {budget})")]
    Alignment { edits: usize, tokens: usize, budget: usize },
    #[error("expected {expected} labelled segments, found {found}")]
    SegmentCount { expected: usize, found: usize },
}

/// Byte ranges of the top-level `{...}` regions whose braces balance, ignoring braces
/// inside JSON string literals.
fn balanced_objects(raw: &str) -> Vec<Range<usize>> {
    let mut found = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut in_string = false;
    let mut escaped = false;
    for (i, b) in raw.bytes().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' if depth > 0 => in_string = true,
            b'{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    found.push(start..i + 1);
                }
            }
            _ => {}
        }
    }
    found
}

fn arity(task: TaskKind) -> usize {
    if task == TaskKind::TypeAndQuality {
        2
    } else {
        1
    }
}

/// Builds the task's answer from label strings. In the joint task the two labels may
/// come in either order, since the vocabularies are disjoint.
fn answer_from_names(names: &[&str], task: TaskKind) -> Result<LabelAnswer, ParseError> {
    let expected = arity(task);
    if names.len() != expected {
        return Err(ParseError::Arity { expected, found: names.len() });
    }
    let label_err = |e: crate::corpus::LabelParseError| ParseError::Label(e.to_string());
    match task {
        TaskKind::TypeOnly => Ok(LabelAnswer::Type { arg_type: names[0].parse().map_err(label_err)? }),
        TaskKind::QualityOnly => Ok(LabelAnswer::Quality { quality: names[0].parse().map_err(label_err)? }),
        TaskKind::TypeAndQuality => {
            let (a, b) = (names[0], names[1]);
            if let (Ok(arg_type), Ok(quality)) = (a.parse::<ArgType>(), b.parse::<QualityLabel>()) {
                return Ok(LabelAnswer::Both { arg_type, quality });
            }
            if let (Ok(arg_type), Ok(quality)) = (b.parse::<ArgType>(), a.parse::<QualityLabel>()) {
                return Ok(LabelAnswer::Both { arg_type, quality });
            }
            Err(ParseError::Label(format!("{a:?}, {b:?} is not a type and a quality")))
        }
        TaskKind::Segmentation => Err(ParseError::Format("segmentation has no label answer".into())),
    }
}

fn normalize_key(key: &str) -> String {
    key.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_uppercase()
}

/// Parses a few-shot classification answer such as `{"TYPE": ["Position"]}`, possibly
/// surrounded by prose.
pub fn parse_label_object(raw: &str, task: TaskKind) -> Result<LabelAnswer, ParseError> {
    let expected = task.answer_key().ok_or_else(|| ParseError::Format("segmentation has no label answer".into()))?;
    let regions = balanced_objects(raw);
    if regions.is_empty() {
        return Err(ParseError::Format("no balanced {...} object".into()));
    }
    let value = regions
        .into_iter()
        .find_map(|r| serde_json::from_str::<Value>(&raw[r]).ok().filter(Value::is_object))
        .ok_or_else(|| ParseError::Format("no {...} region is a JSON object".into()))?;
    let object = value.as_object().expect("filtered to objects");
    let labels = object
        .iter()
        .find(|(k, _)| normalize_key(k) == expected)
        .map(|(_, v)| v)
        .ok_or_else(|| ParseError::Key { expected, found: object.keys().cloned().collect() })?;
    let names: Vec<&str> = match labels {
        Value::String(s) => vec![s.as_str()],
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().ok_or_else(|| ParseError::Format(format!("label {v} is not a string"))))
            .collect::<Result<_, _>>()?,
        other => return Err(ParseError::Format(format!("labels must be a list, got {other}"))),
    };
    answer_from_names(&names, task)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub text: String,
    pub answer: LabelAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterleavedParse {
    pub segments: Vec<LabeledSegment>,
}

impl InterleavedParse {
    pub fn answers(&self) -> Vec<LabelAnswer> {
        self.segments.iter().map(|s| s.answer).collect()
    }
}

/// Parses a fine-tuned model's output, where each segment is followed by its label
/// marker (`... <Claim, Adequate>`).
pub fn parse_interleaved(raw: &str, task: TaskKind) -> Result<InterleavedParse, ParseError> {
    if !task.is_classification() {
        return Err(ParseError::Format("segmentation has no label answer".into()));
    }
    let mut segments = Vec::new();
    let mut cursor = 0;
    for caps in MARKER.captures_iter(raw) {
        let whole = caps.get(0).unwrap();
        let text = raw[cursor..whole.start()].trim();
        if text.is_empty() {
            return Err(ParseError::Format(format!("marker {} labels no text", whole.as_str())));
        }
        let names: Vec<&str> = caps[1].split(',').map(str::trim).collect();
        let answer = answer_from_names(&names, task).map_err(|e| match e {
            ParseError::Arity { .. } | ParseError::Label(_) => {
                ParseError::Label(format!("marker {}: {e}", whole.as_str()))
            }
            other => other,
        })?;
        segments.push(LabeledSegment { text: text.to_string(), answer });
        cursor = whole.end();
    }
    if segments.is_empty() {
        return Err(ParseError::Format("no label markers".into()));
    }
    if !raw[cursor..].trim().is_empty() {
        return Err(ParseError::Format("text after the final marker is unlabelled".into()));
    }
    Ok(InterleavedParse { segments })
}

/// A predicted segmentation of an essay: boundaries are the exclusive end tokens of the
/// segments, the last one being the essay's token count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedSegmentation {
    pub essay_id: String,
    pub boundaries: Vec<usize>,
}

impl PredictedSegmentation {
    pub fn spans(&self) -> Vec<Range<usize>> {
        partition_from_ends(&self.boundaries)
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// The segmentation the gold spans encode.
    pub fn from_gold(essay: &AnnotatedEssay) -> Self {
        Self { essay_id: essay.essay.id.clone(), boundaries: essay.gold_partition().iter().map(|r| r.end).collect() }
    }
}

/// Maps a SEP-segmented model output back onto `original`'s tokens through a
/// minimum-edit alignment. Each separator lands on the latest original boundary
/// consistent with an optimal alignment.
pub fn align_segmentation(original: &Essay, raw: &str) -> Result<PredictedSegmentation, ParseError> {
    let pieces: Vec<&str> = SEP_PATTERN.split(raw).collect();
    if pieces.len() < 2 {
        return Err(ParseError::Format("no <SEP> marker".into()));
    }
    let mut output_tokens = Vec::new();
    let mut marker_positions = Vec::with_capacity(pieces.len() - 1);
    for (i, piece) in pieces.iter().enumerate() {
        output_tokens.extend(piece.split_whitespace());
        if i + 1 < pieces.len() {
            marker_positions.push(output_tokens.len());
        }
    }

    let n = original.token_count();
    let alignment = align_tokens(&original.token_texts(), &output_tokens);
    let budget = (MAX_EDIT_RATIO * n as f64).floor() as usize;
    if alignment.edit_distance() > budget {
        return Err(ParseError::Alignment { edits: alignment.edit_distance(), tokens: n, budget });
    }

    let mut boundaries: Vec<usize> = Vec::with_capacity(marker_positions.len() + 1);
    for j in marker_positions {
        let b = alignment.project(j);
        if b > 0 && boundaries.last().is_none_or(|&last| b > last) {
            boundaries.push(b);
        }
    }
    if n > 0 && boundaries.last() != Some(&n) {
        boundaries.push(n);
    }
    Ok(PredictedSegmentation { essay_id: original.id.clone(), boundaries })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parsed {
    Segmentation(PredictedSegmentation),
    Label(LabelAnswer),
    Interleaved(InterleavedParse),
}

/// The output check the retry loop applies for one task, mode, and essay.
#[derive(Debug, Clone)]
pub struct Validator<'a> {
    task: TaskKind,
    mode: PromptMode,
    essay: &'a Essay,
    expected_segments: Option<usize>,
}

impl<'a> Validator<'a> {
    /// Rejects interleaved outputs whose labelled segment count differs from `n`.
    pub fn expecting_segments(mut self, n: usize) -> Self {
        self.expected_segments = Some(n);
        self
    }

    pub fn check(&self, raw: &str) -> Result<Parsed, ParseError> {
        match (self.task, self.mode) {
            (TaskKind::Segmentation, _) => align_segmentation(self.essay, raw).map(Parsed::Segmentation),
            (task, PromptMode::FewShot) => parse_label_object(raw, task).map(Parsed::Label),
            (task, PromptMode::FineTuned) => {
                let parse = parse_interleaved(raw, task)?;
                match self.expected_segments {
                    Some(expected) if expected != parse.segments.len() => {
                        Err(ParseError::SegmentCount { expected, found: parse.segments.len() })
                    }
                    _ => Ok(Parsed::Interleaved(parse)),
                }
            }
        }
    }
}

pub fn make_validator(task: TaskKind, mode: PromptMode, original: &Essay) -> Validator<'_> {
    Validator { task, mode, essay: original, expected_segments: None }
}
