//! The predictions file: one JSON header line, then one JSON object per essay. It holds
//! everything evaluation needs, so reports can be recomputed without a model.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{ArgType, CorpusSplit, QualityLabel};
use crate::inference::CompletionOutcome;
use crate::metrics::{DiscardCounts, EvalAccumulator, EvalReport, PredSpan, Score, SegmentationSource};
use crate::prompt::{PromptMode, TaskKind};

pub const PREDICTIONS_FORMAT: &str = "argmine-predictions/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionsHeader {
    pub format: String,
    pub experiment: String,
    pub config_hash: String,
    pub task: TaskKind,
    pub segmentation_source: SegmentationSource,
    pub mode: PromptMode,
    pub shots: usize,
    pub model: String,
    pub run: usize,
    /// Number of essay lines that follow.
    pub essays: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    /// Taken from the annotations; no model call.
    Gold,
    Valid,
    Discarded,
    TransportFailed,
}

/// How one model call (with its retries) ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub status: ItemStatus,
    pub attempts: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ItemRecord {
    pub fn gold() -> Self {
        Self { status: ItemStatus::Gold, attempts: 0, detail: None }
    }

    pub fn from_outcome<T>(outcome: &CompletionOutcome<T>) -> Self {
        match outcome {
            CompletionOutcome::Valid { attempts, .. } => {
                Self { status: ItemStatus::Valid, attempts: *attempts, detail: None }
            }
            CompletionOutcome::Discarded { attempts, last_rejection, .. } => {
                Self { status: ItemStatus::Discarded, attempts: *attempts, detail: Some(last_rejection.clone()) }
            }
            CompletionOutcome::TransportFailed { error, attempts } => {
                Self { status: ItemStatus::TransportFailed, attempts: *attempts, detail: Some(error.to_string()) }
            }
        }
    }

    pub fn succeeded(&self) -> bool {
        matches!(self.status, ItemStatus::Gold | ItemStatus::Valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub start_token: usize,
    pub end_token: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg_type: Option<ArgType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityLabel>,
    /// Per-argument call (few-shot classification only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ItemRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssayPrediction {
    pub essay_id: String,
    pub token_count: usize,
    pub segmentation: ItemRecord,
    /// Whole-essay call (fine-tuned classification only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ItemRecord>,
    /// Empty when segmentation failed.
    pub spans: Vec<SpanPrediction>,
}

impl EssayPrediction {
    /// Spans for scoring, or `None` when the essay has no usable segmentation.
    pub fn pred_spans(&self) -> Option<Vec<PredSpan>> {
        if !self.segmentation.succeeded() {
            return None;
        }
        Some(
            self.spans
                .iter()
                .map(|s| PredSpan { range: s.start_token..s.end_token, arg_type: s.arg_type, quality: s.quality })
                .collect(),
        )
    }

    pub fn discards(&self) -> DiscardCounts {
        let mut d = DiscardCounts::default();
        let mut count = |r: &ItemRecord, essay_level: bool| match r.status {
            ItemStatus::Discarded if essay_level => d.essays += 1,
            ItemStatus::Discarded => d.spans += 1,
            ItemStatus::TransportFailed => d.transport_failures += 1,
            _ => {}
        };
        count(&self.segmentation, true);
        if let Some(c) = &self.classification {
            count(c, true);
        }
        for s in &self.spans {
            if let Some(c) = &s.classification {
                count(c, false);
            }
        }
        d
    }

    /// Whether the essay yielded anything for `task`.
    pub fn processed(&self, task: TaskKind) -> bool {
        if !self.segmentation.succeeded() {
            return false;
        }
        task == TaskKind::Segmentation || self.spans.iter().any(|s| s.arg_type.is_some() || s.quality.is_some())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PredictionsError {
    #[error("cannot read predictions: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("essay {0} is not in the evaluation split")]
    UnknownEssay(String),
    #[error("essay {essay_id}: predictions cover {found} tokens, the corpus essay has {expected}")]
    TokenMismatch { essay_id: String, expected: usize, found: usize },
}

pub fn write_predictions<W: Write>(
    mut out: W,
    header: &PredictionsHeader,
    predictions: &[EssayPrediction],
) -> io::Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for p in predictions {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_predictions<R: BufRead>(input: R) -> Result<(PredictionsHeader, Vec<EssayPrediction>), PredictionsError> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or(PredictionsError::Line { line: 1, message: "empty file".into() })?;
    let header: PredictionsHeader = serde_json::from_str(&first?)
        .map_err(|e| PredictionsError::Line { line: 1, message: format!("invalid header: {e}") })?;
    if header.format != PREDICTIONS_FORMAT {
        return Err(PredictionsError::Line {
            line: 1,
            message: format!("unsupported format {:?} (expected {PREDICTIONS_FORMAT:?})", header.format),
        });
    }
    let mut predictions = Vec::with_capacity(header.essays);
    let mut seen = HashMap::new();
    let mut last_line = 1;
    for (line, text) in lines {
        let text = text?;
        last_line = line;
        if text.trim().is_empty() {
            continue;
        }
        let p: EssayPrediction =
            serde_json::from_str(&text).map_err(|e| PredictionsError::Line { line, message: e.to_string() })?;
        if let Some(prev) = seen.insert(p.essay_id.clone(), line) {
            return Err(PredictionsError::Line {
                line,
                message: format!("essay {} already given on line {prev}", p.essay_id),
            });
        }
        predictions.push(p);
    }
    if predictions.len() != header.essays {
        return Err(PredictionsError::Line {
            line: last_line + 1,
            message: format!("header announces {} essays, file has {}", header.essays, predictions.len()),
        });
    }
    Ok((header, predictions))
}

/// Scores predictions against the gold annotations of `split`, essay by essay in the
/// order given. Uses no model.
pub fn evaluate_predictions<S: Score>(
    split: &CorpusSplit,
    header: &PredictionsHeader,
    predictions: &[EssayPrediction],
) -> Result<EvalReport<S>, PipelineError> {
    let gold: HashMap<&str, _> = split.essays.iter().map(|e| (e.essay.id.as_str(), e)).collect();
    let mut acc = EvalAccumulator::new(header.task, header.segmentation_source);
    for p in predictions {
        let essay = *gold.get(p.essay_id.as_str()).ok_or_else(|| PredictionsError::UnknownEssay(p.essay_id.clone()))?;
        if essay.essay.token_count() != p.token_count {
            return Err(PredictionsError::TokenMismatch {
                essay_id: p.essay_id.clone(),
                expected: essay.essay.token_count(),
                found: p.token_count,
            }
            .into());
        }
        let spans = p.pred_spans();
        acc.add_essay(essay, spans.as_deref())?;
        let d = p.discards();
        acc.discards.essays += d.essays;
        acc.discards.spans += d.spans;
        acc.discards.transport_failures += d.transport_failures;
    }
    Ok(acc.finish())
}
