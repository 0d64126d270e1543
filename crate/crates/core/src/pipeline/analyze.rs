use serde::{Deserialize, Serialize};

use super::predictions::{ItemRecord, ItemStatus};
use super::{classify_essay, segment_essay, PipelineError, ShotSet, DEFAULT_PARALLELISM};
use crate::corpus::{normalize_essay, ArgType, QualityLabel, TextNormalizer};
use crate::inference::{Completer, CompletionOutcome, TransportError};
use crate::prompt::{PromptMode, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeOptions {
    pub task: TaskKind,
    pub mode: PromptMode,
    pub transport_retries: u32,
    pub parallelism: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            task: TaskKind::TypeAndQuality,
            mode: PromptMode::FewShot,
            transport_retries: 1,
            parallelism: DEFAULT_PARALLELISM,
        }
    }
}

/// One segment of the analyzed text. Offsets are half-open, over the normalized text, in
/// Unicode scalar values (`start`/`end`) and UTF-16 code units (for browsers).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzedSegment {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub utf16_start: usize,
    pub utf16_end: usize,
    pub text: String,
    pub arg_type: Option<ArgType>,
    pub quality: Option<QualityLabel>,
    /// No valid label was obtained for this segment.
    pub discarded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisResult {
    /// The text the offsets refer to (after normalization).
    pub text: String,
    pub task: TaskKind,
    pub mode: PromptMode,
    pub segmentation: ItemRecord,
    /// Segments tiling `text` in order. A failed segmentation yields one unlabelled segment.
    pub segments: Vec<AnalyzedSegment>,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("essay text is empty")]
    EmptyText,
    #[error("task {0} cannot be used for feedback; choose a classification task")]
    NotClassification(TaskKind),
    #[error("model unavailable: {0}")]
    Transport(TransportError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Byte offset to (char offset, UTF-16 offset) over `text`.
fn offsets(text: &str, byte: usize) -> (usize, usize) {
    let prefix = &text[..byte];
    (prefix.chars().count(), prefix.encode_utf16().count())
}

/// Segments and classifies one essay for feedback.
pub fn analyze(
    text: &str,
    options: &AnalyzeOptions,
    shots: &ShotSet,
    normalizer: &dyn TextNormalizer,
    completer: &dyn Completer,
) -> Result<AnalysisResult, AnalyzeError> {
    if text.trim().is_empty() {
        return Err(AnalyzeError::EmptyText);
    }
    if !options.task.is_classification() {
        return Err(AnalyzeError::NotClassification(options.task));
    }
    let normalized = normalize_essay("input", text, normalizer, &[]);
    let essay = normalized.essay;
    let mut result = AnalysisResult {
        text: essay.text().to_string(),
        task: options.task,
        mode: options.mode,
        segmentation: ItemRecord::gold(),
        segments: Vec::new(),
        warnings: normalized.warnings,
    };

    let outcome = segment_essay(&essay, options.mode, &shots.segmentation, completer, options.transport_retries)?;
    result.segmentation = ItemRecord::from_outcome(&outcome);
    let segmentation = match outcome {
        CompletionOutcome::Valid { value, .. } => value,
        CompletionOutcome::TransportFailed { error, .. } => return Err(AnalyzeError::Transport(error)),
        CompletionOutcome::Discarded { .. } => {
            let (end, utf16_end) = offsets(&essay.normalized_text, essay.normalized_text.len());
            result.segments.push(AnalyzedSegment {
                index: 0,
                start: 0,
                end,
                utf16_start: 0,
                utf16_end,
                text: result.text.clone(),
                arg_type: None,
                quality: None,
                discarded: true,
            });
            result.warnings.push("the model did not produce a usable segmentation".into());
            return Ok(result);
        }
    };

    let partition = segmentation.spans();
    let outcomes = classify_essay(
        &essay,
        &partition,
        options.task,
        options.mode,
        &shots.classification,
        completer,
        options.transport_retries,
        options.parallelism,
    )?;
    if let Some(CompletionOutcome::TransportFailed { error, .. }) =
        outcomes.iter().find(|o| matches!(o, CompletionOutcome::TransportFailed { .. }))
    {
        return Err(AnalyzeError::Transport(error.clone()));
    }
    let labels: Vec<Option<_>> = match options.mode {
        PromptMode::FewShot => outcomes.into_iter().map(|o| o.valid().and_then(|a| a.first().copied())).collect(),
        PromptMode::FineTuned => match outcomes.into_iter().next().and_then(CompletionOutcome::valid) {
            Some(answers) => answers.into_iter().map(Some).collect(),
            None => vec![None; partition.len()],
        },
    };

    let text = &essay.normalized_text;
    for (i, (range, label)) in partition.iter().zip(labels).enumerate() {
        let byte_start = if i == 0 { 0 } else { essay.tokens[range.start].start };
        let byte_end = match partition.get(i + 1) {
            Some(next) => essay.tokens[next.start].start,
            None => text.len(),
        };
        let (start, utf16_start) = offsets(text, byte_start);
        let (end, utf16_end) = offsets(text, byte_end);
        result.segments.push(AnalyzedSegment {
            index: i,
            start,
            end,
            utf16_start,
            utf16_end,
            text: text[byte_start..byte_end].to_string(),
            arg_type: label.and_then(|l| l.arg_type()),
            quality: label.and_then(|l| l.quality()),
            discarded: label.is_none(),
        });
    }
    let discarded = result.segments.iter().filter(|s| s.discarded).count();
    if discarded > 0 {
        result.warnings.push(format!("{discarded} segment(s) could not be classified"));
    }
    debug_assert!(result.segmentation.status == ItemStatus::Valid);
    Ok(result)
}
