//! Prompt rendering for segmentation and classification, in few-shot and fine-tuned form.
//!
//! A few-shot prompt is the concatenation, in this order, of: the rendered shot examples,
//! the essay, the task query, the output requirement, and (classification only) the
//! quoted target argument. Elements are separated by one blank line. Fine-tuned models
//! receive the bare input only.

use std::fmt;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedEssay, Essay};

pub const SEP: &str = "<SEP>";
pub const MAX_SHOTS: usize = 4;

const SEGMENTATION_QUERY: &str = include_str!("../assets/prompts/segmentation_query.txt");
const SEGMENTATION_OUTPUT: &str = include_str!("../assets/prompts/segmentation_output.txt");
const TYPE_QUERY: &str = include_str!("../assets/prompts/type_query.txt");
const QUALITY_QUERY: &str = include_str!("../assets/prompts/quality_query.txt");
const TYPE_OUTPUT: &str = include_str!("../assets/prompts/type_output.txt");
const QUALITY_OUTPUT: &str = include_str!("../assets/prompts/quality_output.txt");
const TYPE_AND_QUALITY_OUTPUT: &str = include_str!("../assets/prompts/type_and_quality_output.txt");

fn asset(text: &'static str) -> &'static str {
    text.strip_suffix('\n').unwrap_or(text)
}

/// Matches a segment separator, tolerating case and inner whitespace ("< SEP >", "<sep>").
pub(crate) static SEP_PATTERN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<\s*sep\s*>").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Segmentation,
    TypeOnly,
    QualityOnly,
    TypeAndQuality,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] =
        [TaskKind::Segmentation, TaskKind::TypeOnly, TaskKind::QualityOnly, TaskKind::TypeAndQuality];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Segmentation => "segmentation",
            TaskKind::TypeOnly => "type_only",
            TaskKind::QualityOnly => "quality_only",
            TaskKind::TypeAndQuality => "type_and_quality",
        }
    }

    pub fn is_classification(self) -> bool {
        self != TaskKind::Segmentation
    }

    pub fn predicts_type(self) -> bool {
        matches!(self, TaskKind::TypeOnly | TaskKind::TypeAndQuality)
    }

    pub fn predicts_quality(self) -> bool {
        matches!(self, TaskKind::QualityOnly | TaskKind::TypeAndQuality)
    }

    /// JSON key the few-shot answer must use.
    pub fn answer_key(self) -> Option<&'static str> {
        match self {
            TaskKind::Segmentation => None,
            TaskKind::TypeOnly => Some("TYPE"),
            TaskKind::QualityOnly => Some("QUALITY"),
            TaskKind::TypeAndQuality => Some("TYPE AND QUALITY"),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "segmentation" | "segment" => Ok(TaskKind::Segmentation),
            "type" | "type_only" => Ok(TaskKind::TypeOnly),
            "quality" | "quality_only" => Ok(TaskKind::QualityOnly),
            "type_and_quality" | "joint" => Ok(TaskKind::TypeAndQuality),
            other => Err(format!("unknown task {other:?} (expected segmentation, type, quality or type_and_quality)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    FewShot,
    FineTuned,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::FewShot => "few_shot",
            PromptMode::FineTuned => "fine_tuned",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "few_shot" | "fewshot" => Ok(PromptMode::FewShot),
            "fine_tuned" | "finetuned" => Ok(PromptMode::FineTuned),
            other => Err(format!("unknown mode {other:?} (expected few-shot or fine-tuned)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("{given} shot examples requested; at most {MAX_SHOTS} are supported")]
    TooManyShots { given: usize },
    #[error("target argument {index} out of range: essay has {segments} segments")]
    TargetOutOfRange { index: usize, segments: usize },
    #[error("task {0} cannot be rendered by this builder")]
    WrongTask(TaskKind),
    #[error("shot example for {got} used in a {expected} prompt")]
    ShotTaskMismatch { expected: TaskKind, got: TaskKind },
}

/// An annotated essay rendered in a task's output format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotExample {
    pub essay_id: String,
    pub task: TaskKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub task: TaskKind,
    pub mode: PromptMode,
    pub shot_count: usize,
    pub body: String,
    /// Which segment a few-shot classification prompt asks about.
    pub target_argument_index: Option<usize>,
    /// Essay the prompt was built for; never sent to the model.
    pub essay_id: Option<String>,
}

impl Prompt {
    pub fn with_essay_id(mut self, id: impl Into<String>) -> Self {
        self.essay_id = Some(id.into());
        self
    }
}

/// Marker inserted after a gold span for `task`.
fn marker_for(span: &crate::corpus::GoldSpan, task: TaskKind) -> String {
    match task {
        TaskKind::Segmentation => SEP.to_string(),
        TaskKind::TypeOnly => format!("<{}>", span.arg_type),
        TaskKind::QualityOnly => format!("<{}>", span.quality),
        TaskKind::TypeAndQuality => format!("<{}, {}>", span.arg_type, span.quality),
    }
}

/// Inserts `" " + marker` right after the last character of each span, leaving every
/// other byte of the essay text untouched.
pub fn render_with_markers<M: AsRef<str>>(essay: &Essay, spans: &[Range<usize>], markers: &[M]) -> String {
    assert_eq!(spans.len(), markers.len(), "one marker per span");
    let text = essay.text();
    let mut out = String::with_capacity(text.len() + spans.len() * 24);
    let mut cursor = 0;
    for (span, marker) in spans.iter().zip(markers) {
        let end = essay.byte_range(span.clone()).end;
        out.push_str(&text[cursor..end]);
        out.push(' ');
        out.push_str(marker.as_ref());
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// The essay with `<SEP>` after each span: the input format for classification.
pub fn render_segmented(essay: &Essay, spans: &[Range<usize>]) -> String {
    render_with_markers(essay, spans, &vec![SEP; spans.len()])
}

/// Renders an annotated essay in `task`'s output format. Markers sit at the ends of the
/// gold partition, so unannotated text after the last span joins that span's segment.
pub fn render_shot_example(essay: &AnnotatedEssay, task: TaskKind) -> ShotExample {
    let markers: Vec<String> = essay.spans.iter().map(|s| marker_for(s, task)).collect();
    let partition = essay.gold_partition();
    let text = if markers.len() == partition.len() {
        render_with_markers(&essay.essay, &partition, &markers)
    } else {
        essay.essay.text().to_string()
    };
    ShotExample { essay_id: essay.essay.id.clone(), task, text }
}

/// Text of each `<SEP>`-delimited segment, trimmed. A whitespace-only remainder after the
/// last separator is not a segment.
pub fn split_segments(segmented: &str) -> Vec<&str> {
    let mut parts: Vec<&str> = SEP_PATTERN.split(segmented).map(str::trim).collect();
    if parts.last().is_some_and(|p| p.is_empty()) {
        parts.pop();
    }
    parts
}

fn check_shots(shots: &[ShotExample], task: TaskKind) -> Result<(), PromptError> {
    if shots.len() > MAX_SHOTS {
        return Err(PromptError::TooManyShots { given: shots.len() });
    }
    match shots.iter().find(|s| s.task != task) {
        Some(s) => Err(PromptError::ShotTaskMismatch { expected: task, got: s.task }),
        None => Ok(()),
    }
}

fn examples_section(shots: &[ShotExample]) -> impl Iterator<Item = String> + '_ {
    shots.iter().enumerate().map(|(i, s)| format!("#EXAMPLE {}:\n{}", i + 1, s.text))
}

pub fn build_segmentation_prompt(essay: &Essay, shots: &[ShotExample]) -> Result<Prompt, PromptError> {
    check_shots(shots, TaskKind::Segmentation)?;
    let mut parts: Vec<String> = examples_section(shots).collect();
    parts.push(format!("#ESSAY:\n{}", essay.text()));
    parts.push(asset(SEGMENTATION_QUERY).to_string());
    parts.push(format!("#OUTPUT:\n{}", asset(SEGMENTATION_OUTPUT)));
    Ok(Prompt {
        task: TaskKind::Segmentation,
        mode: PromptMode::FewShot,
        shot_count: shots.len(),
        body: parts.join("\n\n"),
        target_argument_index: None,
        essay_id: Some(essay.id.clone()),
    })
}

fn classification_query(task: TaskKind) -> String {
    match task {
        TaskKind::TypeOnly => format!("#QUERY: {}", asset(TYPE_QUERY)),
        TaskKind::QualityOnly => format!("#QUERY: {}", asset(QUALITY_QUERY)),
        _ => format!("#QUERY: {}\n{}", asset(TYPE_QUERY), asset(QUALITY_QUERY)),
    }
}

fn classification_output(task: TaskKind) -> &'static str {
    match task {
        TaskKind::TypeOnly => asset(TYPE_OUTPUT),
        TaskKind::QualityOnly => asset(QUALITY_OUTPUT),
        _ => asset(TYPE_AND_QUALITY_OUTPUT),
    }
}

/// One prompt per argument: the whole segmented essay is context, the target segment is
/// quoted at the end.
pub fn build_classification_prompt(
    segmented_essay: &str,
    target_index: usize,
    task: TaskKind,
    shots: &[ShotExample],
) -> Result<Prompt, PromptError> {
    if !task.is_classification() {
        return Err(PromptError::WrongTask(task));
    }
    check_shots(shots, task)?;
    let segments = split_segments(segmented_essay);
    let target = segments
        .get(target_index)
        .ok_or(PromptError::TargetOutOfRange { index: target_index, segments: segments.len() })?;
    let mut parts: Vec<String> = examples_section(shots).collect();
    parts.push(format!("#ESSAY:\n{segmented_essay}"));
    parts.push(classification_query(task));
    parts.push(format!("#OUTPUT:\n{}", classification_output(task)));
    parts.push(format!("#ARGUMENT:\n\"{target}\""));
    Ok(Prompt {
        task,
        mode: PromptMode::FewShot,
        shot_count: shots.len(),
        body: parts.join("\n\n"),
        target_argument_index: Some(target_index),
        essay_id: None,
    })
}

/// Fine-tuned input: the essay for segmentation, the SEP-segmented essay otherwise.
pub fn render_finetuned_input(input: &str, _task: TaskKind) -> String {
    input.to_string()
}

pub fn build_finetuned_prompt(input: &str, task: TaskKind) -> Prompt {
    Prompt {
        task,
        mode: PromptMode::FineTuned,
        shot_count: 0,
        body: render_finetuned_input(input, task),
        target_argument_index: None,
        essay_id: None,
    }
}

/// The essay a prompt carries: the whole body of a fine-tuned prompt, the `#ESSAY:`
/// section of a few-shot one (segmented for classification).
pub fn prompt_essay(prompt: &Prompt) -> &str {
    if prompt.mode == PromptMode::FineTuned {
        return &prompt.body;
    }
    let Some(start) = prompt.body.rfind("#ESSAY:\n").map(|i| i + "#ESSAY:\n".len()) else {
        return &prompt.body;
    };
    let rest = &prompt.body[start..];
    let end = if prompt.task == TaskKind::Segmentation {
        rest.find(&format!("\n\n{}", asset(SEGMENTATION_QUERY)))
    } else {
        rest.find("\n\n#QUERY: ")
    };
    &rest[..end.unwrap_or(rest.len())]
}
