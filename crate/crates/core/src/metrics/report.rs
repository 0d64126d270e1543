use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    bio_tags, match_spans, percent, BioCounts, BioReport, BioTag, ConfusionMatrix, LabelReport, LabelTally,
    MetricError, Score,
};
use crate::corpus::{AnnotatedEssay, ArgType, QualityLabel};
use crate::prompt::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationSource {
    Gold,
    Inferred,
}

impl SegmentationSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gold => "gold",
            Self::Inferred => "inferred",
        }
    }
}

impl fmt::Display for SegmentationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentationSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gold" => Ok(Self::Gold),
            "inferred" | "predicted" => Ok(Self::Inferred),
            other => Err(format!("unknown segmentation source {other:?} (expected gold or inferred)")),
        }
    }
}

/// A predicted span with whatever labels survived validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredSpan {
    pub range: Range<usize>,
    pub arg_type: Option<ArgType>,
    pub quality: Option<QualityLabel>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardCounts {
    /// Essays whose segmentation (or whole-essay classification) was discarded.
    pub essays: usize,
    /// Arguments whose classification was discarded.
    pub spans: usize,
    /// Items abandoned on transport errors.
    pub transport_failures: usize,
}

impl DiscardCounts {
    pub fn total(&self) -> usize {
        self.essays + self.spans
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub matched_tokens: usize,
    pub total_tokens: usize,
    pub predicted_spans: usize,
    pub segmented_essays: usize,
    pub gold_spans: usize,
    pub essays: usize,
}

impl OverlapCounts {
    pub fn overlap_percent<S: Score>(&self) -> S {
        percent(self.matched_tokens, self.total_tokens)
    }

    pub fn avg_arguments_per_essay<S: Score>(&self) -> S {
        ratio(self.predicted_spans, self.segmented_essays)
    }

    pub fn avg_gold_arguments_per_essay<S: Score>(&self) -> S {
        ratio(self.gold_spans, self.essays)
    }
}

fn ratio<S: Score>(num: usize, den: usize) -> S {
    if den == 0 {
        S::zero()
    } else {
        S::from_usize(num).unwrap() / S::from_usize(den).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct SegmentationReport<S> {
    pub bio: BioReport<S>,
    /// Share of tokens inside matched gold/predicted span intersections.
    pub overlap_percent: S,
    /// Mean predicted span count over essays that were segmented.
    pub avg_arguments_per_essay: S,
    pub avg_gold_arguments_per_essay: S,
    pub counts: OverlapCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct EvalReport<S> {
    pub task: TaskKind,
    pub segmentation_source: SegmentationSource,
    pub essays: usize,
    pub gold_spans: usize,
    pub segmentation: Option<SegmentationReport<S>>,
    pub arg_type: Option<LabelReport<S>>,
    pub quality: Option<LabelReport<S>>,
    pub type_confusion: Option<ConfusionMatrix>,
    pub quality_confusion: Option<ConfusionMatrix>,
    pub discards: DiscardCounts,
}

/// Collects per-essay counts; [`EvalAccumulator::finish`] turns them into a report.
#[derive(Debug, Clone)]
pub struct EvalAccumulator {
    task: TaskKind,
    source: SegmentationSource,
    bio: BioCounts,
    overlap: OverlapCounts,
    types: LabelTally<ArgType>,
    qualities: LabelTally<QualityLabel>,
    pub discards: DiscardCounts,
}

impl EvalAccumulator {
    pub fn new(task: TaskKind, source: SegmentationSource) -> Self {
        Self {
            task,
            source,
            bio: BioCounts::default(),
            overlap: OverlapCounts::default(),
            types: LabelTally::default(),
            qualities: LabelTally::default(),
            discards: DiscardCounts::default(),
        }
    }

    /// Scores one essay. `pred` is `None` when the essay produced no usable prediction;
    /// its gold spans then count as unmatched everywhere. Spans lacking the label a score
    /// needs are left out of that score's matching.
    pub fn add_essay(&mut self, gold: &AnnotatedEssay, pred: Option<&[PredSpan]>) -> Result<(), MetricError> {
        let n = gold.essay.token_count();
        let gold_ranges = gold.gold_ranges();
        self.overlap.essays += 1;
        self.overlap.gold_spans += gold_ranges.len();

        if self.source == SegmentationSource::Inferred {
            let gold_tags = bio_tags(n, &gold.gold_partition())?;
            let pred_tags = match pred {
                Some(spans) => {
                    let ranges: Vec<Range<usize>> = spans.iter().map(|s| s.range.clone()).collect();
                    self.overlap.matched_tokens += match_spans(&gold_ranges, &ranges)?.matched_tokens;
                    self.overlap.predicted_spans += ranges.len();
                    self.overlap.segmented_essays += 1;
                    bio_tags(n, &ranges)?
                }
                None => vec![BioTag::O; n],
            };
            self.overlap.total_tokens += n;
            self.bio.add(&gold_tags, &pred_tags)?;
        }

        if self.task.predicts_type() {
            let gold_labels: Vec<ArgType> = gold.spans.iter().map(|s| s.arg_type).collect();
            score_family(&mut self.types, &gold_ranges, &gold_labels, pred, |s| s.arg_type)?;
        }
        if self.task.predicts_quality() {
            let gold_labels: Vec<QualityLabel> = gold.spans.iter().map(|s| s.quality).collect();
            score_family(&mut self.qualities, &gold_ranges, &gold_labels, pred, |s| s.quality)?;
        }
        Ok(())
    }

    pub fn finish<S: Score>(&self) -> EvalReport<S> {
        let echec = self.source == SegmentationSource::Inferred;
        let segmentation = echec.then(|| SegmentationReport {
            bio: self.bio.report(),
            overlap_percent: self.overlap.overlap_percent(),
            avg_arguments_per_essay: self.overlap.avg_arguments_per_essay(),
            avg_gold_arguments_per_essay: self.overlap.avg_gold_arguments_per_essay(),
            counts: self.overlap,
        });
        let (arg_type, type_confusion) = if self.task.predicts_type() {
            (Some(self.types.report(echec)), Some(self.types.confusion()))
        } else {
            (None, None)
        };
        let (quality, quality_confusion) = if self.task.predicts_quality() {
            (Some(self.qualities.report(echec)), Some(self.qualities.confusion()))
        } else {
            (None, None)
        };
        EvalReport {
            task: self.task,
            segmentation_source: self.source,
            essays: self.overlap.essays,
            gold_spans: self.overlap.gold_spans,
            segmentation,
            arg_type,
            quality,
            type_confusion,
            quality_confusion,
            discards: self.discards,
        }
    }
}

fn score_family<L: crate::corpus::Label>(
    tally: &mut LabelTally<L>,
    gold_ranges: &[Range<usize>],
    gold_labels: &[L],
    pred: Option<&[PredSpan]>,
    label_of: impl Fn(&PredSpan) -> Option<L>,
) -> Result<(), MetricError> {
    let Some(pred) = pred else {
        tally.add_unmatched_gold(gold_labels);
        return Ok(());
    };
    let (ranges, labels): (Vec<Range<usize>>, Vec<L>) =
        pred.iter().filter_map(|s| label_of(s).map(|l| (s.range.clone(), l))).unzip();
    let matching = match_spans(gold_ranges, &ranges)?;
    tally.add(&matching, gold_labels, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Essay, GoldSpan};

    fn essay() -> AnnotatedEssay {
        let essay = Essay::new("e", "a b c d e f g h i j");
        let spans = [(0, 5, ArgType::Lead, QualityLabel::Adequate), (5, 10, ArgType::Claim, QualityLabel::Effective)]
            .iter()
            .enumerate()
            .map(|(i, &(s, e, t, q))| GoldSpan {
                essay_id: "e".into(),
                discourse_id: format!("d{i}"),
                index: i,
                start_token: s,
                end_token: e,
                arg_type: t,
                quality: q,
            })
            .collect();
        AnnotatedEssay { essay, spans }
    }

    fn gold_pred(e: &AnnotatedEssay) -> Vec<PredSpan> {
        e.spans
            .iter()
            .map(|s| PredSpan { range: s.tokens(), arg_type: Some(s.arg_type), quality: Some(s.quality) })
            .collect()
    }

    #[test]
    fn perfect_inferred_run() {
        let e = essay();
        let mut acc = EvalAccumulator::new(TaskKind::TypeAndQuality, SegmentationSource::Inferred);
        acc.add_essay(&e, Some(&gold_pred(&e))).unwrap();
        let r = acc.finish::<f64>();
        let seg = r.segmentation.unwrap();
        assert_eq!(seg.bio.macro_f1, 100.0);
        assert_eq!(seg.overlap_percent, 100.0);
        assert_eq!(seg.avg_arguments_per_essay, 2.0);
        let types = r.arg_type.unwrap();
        // Nothing went unmatched, so Echec never occurred.
        assert!(!types.echec_in_macro);
        assert_eq!(types.echec_events, 0);
        assert_eq!(types.row("Lead").unwrap().f1, 100.0);
    }

    #[test]
    fn merged_prediction_matches_nothing() {
        let e = essay();
        let mut acc = EvalAccumulator::new(TaskKind::TypeOnly, SegmentationSource::Inferred);
        let merged = [PredSpan { range: 0..10, arg_type: Some(ArgType::Lead), quality: None }];
        acc.add_essay(&e, Some(&merged)).unwrap();
        let r = acc.finish::<f64>();
        assert_eq!(r.segmentation.unwrap().overlap_percent, 0.0);
        let types = r.arg_type.unwrap();
        assert!(types.echec_in_macro);
        assert_eq!(types.echec_events, 3);
        assert_eq!(types.macro_f1, 0.0);
        let cm = r.type_confusion.unwrap();
        assert_eq!(cm.get("Lead", "Echec"), Some(1));
        assert_eq!(cm.get("Claim", "Echec"), Some(1));
    }

    #[test]
    fn discarded_essay_and_span() {
        let e = essay();
        let mut acc = EvalAccumulator::new(TaskKind::QualityOnly, SegmentationSource::Gold);
        acc.add_essay(&e, None).unwrap();
        let mut pred = gold_pred(&e);
        pred[1].quality = None;
        acc.add_essay(&e, Some(&pred)).unwrap();
        let r = acc.finish::<f64>();
        assert!(r.segmentation.is_none());
        let q = r.quality.unwrap();
        assert!(!q.echec_in_macro);
        let adequate = q.row("Adequate").unwrap();
        assert_eq!((adequate.tp, adequate.fn_, adequate.support), (1, 1, 2));
        assert_eq!(r.quality_confusion.unwrap().get("Effective", "Echec"), Some(2));
    }
}
