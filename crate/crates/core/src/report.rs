//! Report output: a flat table (one row per experiment, label and metric) for plotting,
//! aligned text tables with mean ± std, and the run manifest.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::metrics::{round_half_up, AggregateReport, ConfusionMatrix, Score, ECHEC};
use crate::pipeline::{ExperimentConfig, ExperimentResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub config_hash: String,
    pub model: String,
    pub task: String,
    pub mode: String,
    pub shots: usize,
    pub setup: String,
    pub segmentation: String,
    pub scope: String,
    pub label: String,
    pub metric: String,
    pub value: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn push_aggregate<S: Score>(
        &mut self,
        config: &ExperimentConfig,
        config_hash: &str,
        aggregate: &AggregateReport<S>,
    ) {
        for m in &aggregate.metrics {
            self.rows.push(ReportRow {
                experiment: config.label(),
                config_hash: config_hash.to_string(),
                model: config.model.model.clone(),
                task: config.task.to_string(),
                mode: config.mode.to_string(),
                shots: config.shots,
                setup: config.setup().to_string(),
                segmentation: config.segmentation.to_string(),
                scope: m.key.scope.clone(),
                label: m.key.label.clone(),
                metric: m.key.metric.clone(),
                value: m.mean.to_f64().unwrap_or(f64::NAN),
                std: m.std.to_f64().unwrap_or(f64::NAN),
                runs: aggregate.runs,
            });
        }
    }

    pub fn push_result<S: Score>(&mut self, result: &ExperimentResult<S>) {
        self.push_aggregate(&result.config, &result.config_hash, &result.aggregate);
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut writer = csv::Writer::from_writer(out);
        for row in &self.rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Self, csv::Error> {
        let rows = csv::Reader::from_reader(input).deserialize().collect::<Result<_, _>>()?;
        Ok(Self { rows })
    }
}

fn mean_std<S: Score>(a: &AggregateReport<S>, scope: &str, label: &str, metric: &str) -> String {
    match a.get(scope, label, metric) {
        Some(m) => format!("{} ± {}", round_half_up(m.mean, 2), round_half_up(m.std, 2)),
        None => "-".into(),
    }
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
}

/// Human-readable report for one experiment: every score as mean ± std with two
/// decimals (half-up).
pub fn render_text<S: Score>(config: &ExperimentConfig, config_hash: &str, aggregate: &AggregateReport<S>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Experiment {}", config.label());
    let _ = writeln!(
        out,
        "task {}  setup {}  segmentation {}  mode {}  shots {}  model {}",
        config.task,
        config.setup(),
        config.segmentation,
        config.mode,
        config.shots,
        config.model.model
    );
    let _ = writeln!(out, "config {config_hash}");
    let note = if aggregate.single_run { " (single run: std not estimated)" } else { "" };
    let _ = writeln!(out, "runs {}{note}", aggregate.runs);

    if aggregate.get("segmentation", "macro", "f1").is_some() {
        let _ = writeln!(out, "\nSegmentation (BIO, macro F1 {})", mean_std(aggregate, "segmentation", "macro", "f1"));
        let rows: Vec<Vec<String>> = ["B", "I"]
            .iter()
            .map(|t| {
                let mut r = vec![t.to_string()];
                r.extend(["precision", "recall", "f1"].iter().map(|m| mean_std(aggregate, "segmentation", t, m)));
                r
            })
            .collect();
        table(&mut out, &["Tag", "Precision", "Recall", "F1"], &rows);
        let _ = writeln!(out, "overlap with gold  {} %", mean_std(aggregate, "segmentation", "all", "overlap_percent"));
        let _ = writeln!(
            out,
            "arguments / essay  {}",
            mean_std(aggregate, "segmentation", "all", "avg_arguments_per_essay")
        );
    }

    for (scope, title) in [("type", "Argument type"), ("quality", "Argument quality")] {
        if aggregate.get(scope, "macro", "f1").is_none() {
            continue;
        }
        let echec = if config.segmentation == crate::metrics::SegmentationSource::Inferred {
            format!(", {ECHEC} counted at F1 0 once arguments go unmatched")
        } else {
            String::new()
        };
        let _ = writeln!(out, "\n{title} (macro F1 {}{echec})", mean_std(aggregate, scope, "macro", "f1"));
        let mut labels: Vec<&str> = Vec::new();
        for m in &aggregate.metrics {
            if m.key.scope == scope && m.key.label != "macro" && !labels.contains(&m.key.label.as_str()) {
                labels.push(&m.key.label);
            }
        }
        let rows: Vec<Vec<String>> = labels
            .iter()
            .map(|l| {
                let mut r = vec![l.to_string()];
                r.extend(["precision", "recall", "f1"].iter().map(|m| mean_std(aggregate, scope, l, m)));
                r
            })
            .collect();
        table(&mut out, &["Label", "Precision", "Recall", "F1"], &rows);
    }

    let _ = writeln!(
        out,
        "\ndiscarded essays {}  discarded arguments {}  transport failures {}",
        mean_std(aggregate, "discards", "essays", "count"),
        mean_std(aggregate, "discards", "spans", "count"),
        mean_std(aggregate, "discards", "transport", "count"),
    );
    out
}

/// A confusion matrix as an aligned text table (rows gold, columns predicted).
pub fn render_confusion(title: &str, matrix: &ConfusionMatrix) -> String {
    let mut names: Vec<String> = matrix.labels.clone();
    names.push(ECHEC.into());
    let mut header: Vec<&str> = vec!["gold \\ predicted"];
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = names
        .iter()
        .zip(&matrix.counts)
        .map(|(name, counts)| std::iter::once(name.clone()).chain(counts.iter().map(usize::to_string)).collect())
        .collect();
    let mut out = format!("{title}\n");
    table(&mut out, &header, &rows);
    out
}

/// What produced a set of reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<InputDigest>,
    pub experiments: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub experiment: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Empty when the experiment failed.
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{aggregate_runs, EvalAccumulator, SegmentationSource};
    use crate::prompt::TaskKind;

    #[test]
    fn table_round_trips_through_csv() {
        let config = ExperimentConfig { task: TaskKind::QualityOnly, ..Default::default() };
        let report = EvalAccumulator::new(TaskKind::QualityOnly, SegmentationSource::Gold).finish::<f64>();
        let agg = aggregate_runs(&[report]).unwrap();
        let mut t = ReportTable::default();
        t.push_aggregate(&config, &config.hash(), &agg);
        assert_eq!(t.rows.len(), agg.metrics.len());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(ReportTable::read_csv(buf.as_slice()).unwrap(), t);
        let text = render_text(&config, &config.hash(), &agg);
        assert!(text.contains("Argument quality (macro F1 0.00 ± 0.00)"));
        assert!(text.contains("single run"));
    }

    #[test]
    fn confusion_text_has_echec_row_and_column() {
        let m = ConfusionMatrix {
            labels: vec!["A".into(), "B".into()],
            counts: vec![vec![1, 0, 2], vec![0, 3, 0], vec![0, 0, 0]],
        };
        let text = render_confusion("t", &m);
        assert_eq!(text.lines().filter(|l| l.starts_with("Echec")).count(), 1);
        assert!(text.lines().next().unwrap() == "t");
    }
}
