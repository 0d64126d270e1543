//! Files written by `run`, `evaluate` and `sweep`. Under the output directory:
//!
//! ```text
//! manifest.json                  what produced everything below
//! table.csv                      one row per experiment, label and metric
//! <experiment>/predictions-<r>.jsonl
//! <experiment>/report-<r>.json   per-run report
//! <experiment>/aggregate.json    mean and std over runs
//! <experiment>/report.txt        the same, as aligned tables
//! ```
//!
//! Report files carry the config hash and the manifest path; they hold no timestamps, so
//! a deterministic rerun reproduces them byte for byte.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use argmine::pipeline::{write_predictions, ExperimentConfig};
use argmine::report::{render_confusion, render_text, sha256_hex, InputDigest, RunManifest};
use argmine::{AggregateReport, EvalReport, ExperimentResult};
use serde::Serialize;

pub const MANIFEST: &str = "manifest.json";
pub const TABLE: &str = "table.csv";

#[derive(Debug, Serialize)]
pub struct ReportFile<'a, T> {
    pub manifest: &'a str,
    pub experiment: &'a str,
    pub config_hash: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<usize>,
    pub report: &'a T,
}

/// Directory name for an experiment label.
pub fn dir_name(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes one experiment's files; returns their paths relative to `root`.
pub struct ExperimentWriter<'a> {
    pub root: &'a Path,
    pub label: &'a str,
    pub config_hash: &'a str,
}

impl ExperimentWriter<'_> {
    fn manifest_ref(&self) -> String {
        format!("../{MANIFEST}")
    }

    fn dir(&self) -> anyhow::Result<PathBuf> {
        let dir = self.root.join(dir_name(self.label));
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(dir)
    }

    fn relative(&self, file: &str) -> String {
        format!("{}/{file}", dir_name(self.label))
    }

    pub fn run_report(&self, run: usize, report: &EvalReport) -> anyhow::Result<String> {
        let file = format!("report-{run}.json");
        let manifest = self.manifest_ref();
        let body = ReportFile {
            manifest: &manifest,
            experiment: self.label,
            config_hash: self.config_hash,
            run: Some(run),
            report,
        };
        write_json(&self.dir()?.join(&file), &body)?;
        Ok(self.relative(&file))
    }

    /// `aggregate.json` and `report.txt`.
    pub fn summary(
        &self,
        config: &ExperimentConfig,
        aggregate: &AggregateReport,
        runs: &[&EvalReport],
    ) -> anyhow::Result<Vec<String>> {
        let dir = self.dir()?;
        let manifest = self.manifest_ref();
        let body = ReportFile {
            manifest: &manifest,
            experiment: self.label,
            config_hash: self.config_hash,
            run: None,
            report: aggregate,
        };
        write_json(&dir.join("aggregate.json"), &body)?;
        fs::write(dir.join("report.txt"), summary_text(config, self.config_hash, aggregate, runs))?;
        Ok(vec![self.relative("aggregate.json"), self.relative("report.txt")])
    }

    pub fn experiment(&self, result: &ExperimentResult) -> anyhow::Result<Vec<String>> {
        let dir = self.dir()?;
        let mut artifacts = Vec::new();
        for run in &result.runs {
            let file = format!("predictions-{}.jsonl", run.header.run);
            let path = dir.join(&file);
            let out = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
            write_predictions(BufWriter::new(out), &run.header, &run.predictions)?;
            artifacts.push(self.relative(&file));
            artifacts.push(self.run_report(run.header.run, &run.report)?);
        }
        let reports: Vec<&EvalReport> = result.runs.iter().map(|r| &r.report).collect();
        artifacts.extend(self.summary(&result.config, &result.aggregate, &reports)?);
        Ok(artifacts)
    }
}

/// Aggregate tables followed by each run's confusion matrices.
pub fn summary_text(
    config: &ExperimentConfig,
    hash: &str,
    aggregate: &AggregateReport,
    runs: &[&EvalReport],
) -> String {
    let mut text = render_text(config, hash, aggregate);
    for (r, report) in runs.iter().enumerate() {
        for (name, matrix) in [("Type", &report.type_confusion), ("Quality", &report.quality_confusion)] {
            if let Some(m) = matrix {
                text.push('\n');
                text.push_str(&render_confusion(&format!("{name} confusion, run {r}"), m));
            }
        }
    }
    text
}

pub fn digest(path: &Path) -> anyhow::Result<InputDigest> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(InputDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn new_manifest(inputs: Vec<InputDigest>) -> RunManifest {
    RunManifest {
        tool: "argmine".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: std::env::args().collect::<Vec<_>>().join(" "),
        started_at: now(),
        finished_at: String::new(),
        inputs,
        experiments: Vec::new(),
    }
}

pub fn write_manifest(root: &Path, manifest: &mut RunManifest) -> anyhow::Result<()> {
    manifest.finished_at = now();
    write_json(&root.join(MANIFEST), manifest)
}

pub fn write_table(root: &Path, table: &argmine::report::ReportTable) -> anyhow::Result<()> {
    let path = root.join(TABLE);
    let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    table.write_csv(file)?;
    Ok(())
}

/// `3711` as `3,711`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
