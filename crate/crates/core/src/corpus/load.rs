use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    locate_span, normalize_essay, tokenize, AnnotatedEssay, ArgType, CorpusSplit, GoldSpan, IdentityNormalizer,
    QualityLabel, SplitName, TextNormalizer,
};

const REQUIRED_COLUMNS: [&str; 5] =
    ["discourse_id", "essay_id", "discourse_text", "discourse_type", "discourse_effectiveness"];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("essay directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed table {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path} lacks required column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
}

pub struct LoadOptions<'a> {
    /// Split receiving every essay when no manifest is given.
    pub default_split: SplitName,
    pub normalizer: &'a dyn TextNormalizer,
}

impl Default for LoadOptions<'_> {
    fn default() -> Self {
        Self { default_split: SplitName::Test, normalizer: &IdentityNormalizer }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub name: SplitName,
    pub essays: usize,
    pub spans: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssayIssue {
    pub essay_id: String,
    pub message: String,
}

/// A table row rejected before span location (bad label, duplicate id).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    /// 1-based line number in the annotation table (the header is line 1).
    pub line: u64,
    pub discourse_id: String,
    pub message: String,
}

/// A valid row that produced no gold span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrphanRow {
    pub discourse_id: String,
    pub essay_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub splits: Vec<SplitSummary>,
    pub essay_errors: Vec<EssayIssue>,
    pub row_errors: Vec<RowIssue>,
    pub orphaned_rows: Vec<OrphanRow>,
    pub manifest_errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl LoadReport {
    pub fn summary(&self, split: SplitName) -> Option<&SplitSummary> {
        self.splits.iter().find(|s| s.name == split)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadedCorpus {
    pub splits: Vec<CorpusSplit>,
    pub report: LoadReport,
}

impl LoadedCorpus {
    pub fn split(&self, name: SplitName) -> Option<&CorpusSplit> {
        self.splits.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    discourse_id: String,
    essay_id: String,
    discourse_text: String,
    discourse_type: String,
    discourse_effectiveness: String,
}

struct Row {
    discourse_id: String,
    text: String,
    arg_type: ArgType,
    quality: QualityLabel,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    essay_id: String,
    split: String,
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::ReaderBuilder::new().flexible(false).from_reader(file))
}

fn check_columns(reader: &mut csv::Reader<fs::File>, path: &Path, required: &[&str]) -> Result<(), CorpusError> {
    let headers = reader.headers().map_err(|source| CorpusError::Csv { path: path.to_path_buf(), source })?.clone();
    for column in required {
        if !headers.iter().any(|h| h.trim() == *column) {
            return Err(CorpusError::MissingColumn { path: path.to_path_buf(), column: column.to_string() });
        }
    }
    Ok(())
}

fn read_manifest(path: &Path, report: &mut LoadReport) -> Result<HashMap<String, SplitName>, CorpusError> {
    let mut reader = open_csv(path)?;
    check_columns(&mut reader, path, &["essay_id", "split"])?;
    let mut map = HashMap::new();
    for (i, record) in reader.deserialize::<ManifestRow>().enumerate() {
        let line = i as u64 + 2;
        let row = match record {
            Ok(row) => row,
            Err(e) => {
                report.manifest_errors.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let split = match row.split.parse::<SplitName>() {
            Ok(s) => s,
            Err(e) => {
                report.manifest_errors.push(format!("line {line}: {e}"));
                continue;
            }
        };
        match map.get(&row.essay_id) {
            Some(prev) if *prev != split => report
                .manifest_errors
                .push(format!("line {line}: essay {} assigned to both {prev} and {split}", row.essay_id)),
            _ => {
                map.insert(row.essay_id, split);
            }
        }
    }
    Ok(map)
}

/// Loads essays and annotations into splits. Per-row and per-essay problems are
/// collected in the load report; only unreadable inputs are errors.
pub fn load_corpus(
    essay_dir: &Path,
    annotations: &Path,
    split_manifest: Option<&Path>,
    options: &LoadOptions<'_>,
) -> Result<LoadedCorpus, CorpusError> {
    if !essay_dir.is_dir() {
        return Err(CorpusError::MissingDirectory(essay_dir.to_path_buf()));
    }
    let mut report = LoadReport::default();
    let manifest = split_manifest.map(|p| read_manifest(p, &mut report)).transpose()?;

    let mut reader = open_csv(annotations)?;
    check_columns(&mut reader, annotations, &REQUIRED_COLUMNS)?;

    // Essays are keyed by id; rows keep file order.
    let mut by_essay: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    let mut seen_ids = HashSet::new();
    for (i, record) in reader.deserialize::<AnnotationRow>().enumerate() {
        let line = i as u64 + 2;
        let row = match record {
            Ok(row) => row,
            Err(e) => {
                report.row_errors.push(RowIssue { line, discourse_id: String::new(), message: e.to_string() });
                continue;
            }
        };
        if !seen_ids.insert(row.discourse_id.clone()) {
            report.row_errors.push(RowIssue {
                line,
                discourse_id: row.discourse_id,
                message: "duplicate discourse_id".into(),
            });
            continue;
        }
        let arg_type = row.discourse_type.parse::<ArgType>();
        let quality = row.discourse_effectiveness.parse::<QualityLabel>();
        let (arg_type, quality) = match (arg_type, quality) {
            (Ok(t), Ok(q)) => (t, q),
            (Err(e), _) | (_, Err(e)) => {
                report.row_errors.push(RowIssue { line, discourse_id: row.discourse_id, message: e.to_string() });
                continue;
            }
        };
        by_essay.entry(row.essay_id).or_default().push(Row {
            discourse_id: row.discourse_id,
            text: row.discourse_text,
            arg_type,
            quality,
        });
    }

    let mut splits: BTreeMap<SplitName, Vec<AnnotatedEssay>> = BTreeMap::new();
    for (essay_id, rows) in by_essay {
        let split = match &manifest {
            None => options.default_split,
            Some(m) => match m.get(&essay_id) {
                Some(s) => *s,
                None => {
                    report.warnings.push(format!("essay {essay_id} is not in the split manifest; skipped"));
                    continue;
                }
            },
        };
        let path = essay_dir.join(format!("{essay_id}.txt"));
        let raw = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) => {
                report
                    .essay_errors
                    .push(EssayIssue { essay_id: essay_id.clone(), message: format!("{}: {e}", path.display()) });
                report.orphaned_rows.extend(rows.into_iter().map(|r| OrphanRow {
                    discourse_id: r.discourse_id,
                    essay_id: essay_id.clone(),
                    reason: "missing essay file".into(),
                }));
                continue;
            }
        };
        if let Some(essay) = build_essay(&essay_id, &raw, rows, options.normalizer, &mut report) {
            splits.entry(split).or_default().push(essay);
        }
    }

    if let Some(m) = &manifest {
        let mut missing: Vec<_> = m
            .keys()
            .filter(|id| !splits.values().flatten().any(|e| &e.essay.id == *id))
            .filter(|id| !report.essay_errors.iter().any(|e| &e.essay_id == *id))
            .cloned()
            .collect();
        missing.sort();
        for id in missing {
            report.warnings.push(format!("manifest essay {id} has no annotation rows"));
        }
    }

    let splits: Vec<CorpusSplit> = splits.into_iter().map(|(name, essays)| CorpusSplit { name, essays }).collect();
    report.splits =
        splits.iter().map(|s| SplitSummary { name: s.name, essays: s.essays.len(), spans: s.span_count() }).collect();
    Ok(LoadedCorpus { splits, report })
}

fn build_essay(
    essay_id: &str,
    raw: &str,
    rows: Vec<Row>,
    normalizer: &dyn TextNormalizer,
    report: &mut LoadReport,
) -> Option<AnnotatedEssay> {
    let tokens = tokenize(raw);
    let mut located: Vec<(std::ops::Range<usize>, Row)> = Vec::with_capacity(rows.len());
    let mut cursor = 0;
    for row in rows {
        let orphan = |reason: &str| OrphanRow {
            discourse_id: row.discourse_id.clone(),
            essay_id: essay_id.to_string(),
            reason: reason.to_string(),
        };
        let found = locate_span(raw, &row.text, cursor).ok().or_else(|| {
            // Rows out of text order: accept an earlier occurrence that does not overlap.
            let mut from = 0;
            while let Ok(r) = locate_span(raw, &row.text, from) {
                if located.iter().all(|(l, _)| r.end <= l.start || r.start >= l.end) {
                    return Some(r);
                }
                from = r.start + 1;
                while !raw.is_char_boundary(from) {
                    from += 1;
                }
            }
            None
        });
        let Some(chars) = found else {
            report.orphaned_rows.push(orphan("discourse text not located in essay"));
            continue;
        };
        cursor = cursor.max(chars.end);
        located.push((chars, row));
    }
    located.sort_by_key(|(r, _)| r.start);

    let mut gold = Vec::with_capacity(located.len());
    for (chars, row) in located {
        // A token belongs to the span its first byte falls in.
        let start = tokens.partition_point(|t| t.start < chars.start);
        let end = tokens.partition_point(|t| t.start < chars.end);
        if end <= start {
            report.orphaned_rows.push(OrphanRow {
                discourse_id: row.discourse_id,
                essay_id: essay_id.to_string(),
                reason: "located text covers no token start".into(),
            });
            continue;
        }
        gold.push(GoldSpan {
            essay_id: essay_id.to_string(),
            discourse_id: row.discourse_id,
            index: gold.len(),
            start_token: start,
            end_token: end,
            arg_type: row.arg_type,
            quality: row.quality,
        });
    }

    if gold.is_empty() {
        report
            .essay_errors
            .push(EssayIssue { essay_id: essay_id.to_string(), message: "no annotated span located".into() });
        return None;
    }
    let normalized = normalize_essay(essay_id, raw, normalizer, &gold);
    report.warnings.extend(normalized.warnings);
    report.orphaned_rows.extend(normalized.degenerate.into_iter().map(|s| OrphanRow {
        discourse_id: s.discourse_id,
        essay_id: essay_id.to_string(),
        reason: "span text removed by normalization".into(),
    }));
    if normalized.spans.is_empty() {
        report.essay_errors.push(EssayIssue {
            essay_id: essay_id.to_string(),
            message: "every span vanished under normalization".into(),
        });
        return None;
    }
    let essay = AnnotatedEssay { essay: normalized.essay, spans: normalized.spans };
    if let Err(e) = essay.validate() {
        report.essay_errors.push(EssayIssue { essay_id: essay_id.to_string(), message: e });
        return None;
    }
    Some(essay)
}
