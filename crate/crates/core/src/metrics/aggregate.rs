use serde::{Deserialize, Serialize};

use super::{EvalReport, LabelReport, MetricError, Score, SegmentationSource};
use crate::prompt::TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricKey {
    /// "segmentation", "type", "quality" or "discards".
    pub scope: String,
    /// A label name, "macro", "B"/"I", or "all".
    pub label: String,
    pub metric: String,
}

impl MetricKey {
    pub fn new(scope: &str, label: &str, metric: &str) -> Self {
        Self { scope: scope.into(), label: label.into(), metric: metric.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct MetricValue<S> {
    #[serde(flatten)]
    pub key: MetricKey,
    pub value: S,
}

fn push<S: Score>(out: &mut Vec<MetricValue<S>>, scope: &str, label: &str, metric: &str, value: S) {
    out.push(MetricValue { key: MetricKey::new(scope, label, metric), value });
}

fn push_labels<S: Score>(out: &mut Vec<MetricValue<S>>, scope: &str, report: &LabelReport<S>) {
    push(out, scope, "macro", "f1", report.macro_f1);
    for row in &report.rows {
        push(out, scope, &row.label, "precision", row.precision);
        push(out, scope, &row.label, "recall", row.recall);
        push(out, scope, &row.label, "f1", row.f1);
    }
}

impl<S: Score> EvalReport<S> {
    /// Every reported quantity as a flat list, in a fixed order.
    pub fn metric_values(&self) -> Vec<MetricValue<S>> {
        let mut out = Vec::new();
        if let Some(seg) = &self.segmentation {
            push(&mut out, "segmentation", "macro", "f1", seg.bio.macro_f1);
            for (tag, p, r, f) in [
                ("B", seg.bio.b_precision, seg.bio.b_recall, seg.bio.b_f1),
                ("I", seg.bio.i_precision, seg.bio.i_recall, seg.bio.i_f1),
            ] {
                push(&mut out, "segmentation", tag, "precision", p);
                push(&mut out, "segmentation", tag, "recall", r);
                push(&mut out, "segmentation", tag, "f1", f);
            }
            push(&mut out, "segmentation", "all", "overlap_percent", seg.overlap_percent);
            push(&mut out, "segmentation", "all", "avg_arguments_per_essay", seg.avg_arguments_per_essay);
        }
        if let Some(r) = &self.arg_type {
            push_labels(&mut out, "type", r);
        }
        if let Some(r) = &self.quality {
            push_labels(&mut out, "quality", r);
        }
        let count = |n: usize| S::from_usize(n).unwrap();
        push(&mut out, "discards", "essays", "count", count(self.discards.essays));
        push(&mut out, "discards", "spans", "count", count(self.discards.spans));
        push(&mut out, "discards", "transport", "count", count(self.discards.transport_failures));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct AggregateMetric<S> {
    #[serde(flatten)]
    pub key: MetricKey,
    pub mean: S,
    /// Sample standard deviation; zero for a single run.
    pub std: S,
    pub values: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct AggregateReport<S> {
    pub task: TaskKind,
    pub segmentation_source: SegmentationSource,
    pub runs: usize,
    /// Set when only one run exists, so `std` carries no information.
    pub single_run: bool,
    pub metrics: Vec<AggregateMetric<S>>,
}

impl<S: Score> AggregateReport<S> {
    pub fn get(&self, scope: &str, label: &str, metric: &str) -> Option<&AggregateMetric<S>> {
        self.metrics.iter().find(|m| m.key.scope == scope && m.key.label == label && m.key.metric == metric)
    }
}

/// Mean and sample standard deviation of every quantity across runs of one configuration.
pub fn aggregate_runs<S: Score>(reports: &[EvalReport<S>]) -> Result<AggregateReport<S>, MetricError> {
    let first = reports.first().ok_or(MetricError::Empty)?;
    let per_run: Vec<Vec<MetricValue<S>>> = reports.iter().map(EvalReport::metric_values).collect();
    for (i, (report, values)) in reports.iter().zip(&per_run).enumerate() {
        if report.task != first.task || report.segmentation_source != first.segmentation_source {
            return Err(MetricError::Heterogeneous(format!(
                "run {i} evaluates a different task or segmentation source"
            )));
        }
        let same_keys = values.len() == per_run[0].len() && values.iter().zip(&per_run[0]).all(|(a, b)| a.key == b.key);
        if !same_keys {
            return Err(MetricError::Heterogeneous(format!("run {i} reports different quantities")));
        }
    }
    let n = reports.len();
    let n_s = S::from_usize(n).unwrap();
    let metrics = (0..per_run[0].len())
        .map(|k| {
            let values: Vec<S> = per_run.iter().map(|run| run[k].value).collect();
            let mean = values.iter().fold(S::zero(), |a, &v| a + v) / n_s;
            let std = if n < 2 {
                S::zero()
            } else {
                let ss = values.iter().fold(S::zero(), |a, &v| a + (v - mean) * (v - mean));
                (ss / S::from_usize(n - 1).unwrap()).sqrt()
            };
            AggregateMetric { key: per_run[0][k].key.clone(), mean, std, values }
        })
        .collect();
    Ok(AggregateReport {
        task: first.task,
        segmentation_source: first.segmentation_source,
        runs: n,
        single_run: n == 1,
        metrics,
    })
}
