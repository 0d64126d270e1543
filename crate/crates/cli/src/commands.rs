use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use argmine::corpus::{
    load_corpus, CorpusSplit, HttpNormalizer, IdentityNormalizer, LoadOptions, LoadedCorpus, SplitName,
};
use argmine::inference::ModelConfig;
use argmine::metrics::aggregate_runs;
use argmine::pipeline::{evaluate_predictions, read_predictions, run_experiment, ExperimentConfig, PipelineError};
use argmine::report::{ManifestEntry, ReportTable};
use argmine::EvalReport;
use toml::Table;

use crate::args::{EvaluateArgs, IngestArgs, RunArgs, SweepArgs};
use crate::config::{self, experiment_from_table, merge, RunFile, SweepFile};
use crate::output::{self, digest, thousands, ExperimentWriter};
use crate::{completer_factory, Failure, Outcome};

const DEFAULT_OUT: &str = "argmine-out";
const LISTED_ISSUES: usize = 10;

pub fn ingest(args: IngestArgs) -> Result<Outcome, Failure> {
    if !args.essays.is_dir() {
        return Err(Failure::usage(anyhow!("essay directory {} does not exist", args.essays.display())));
    }
    let http;
    let normalizer: &dyn argmine::corpus::TextNormalizer = match &args.normalizer_url {
        Some(url) => {
            http = HttpNormalizer::new(url.clone(), Duration::from_secs(60))
                .map_err(|e| Failure::usage(anyhow!("{e}")))?;
            &http
        }
        None => &IdentityNormalizer,
    };
    let options = LoadOptions { default_split: args.default_split, normalizer };
    let corpus =
        load_corpus(&args.essays, &args.annotations, args.splits.as_deref(), &options).map_err(Failure::usage)?;
    let report = &corpus.report;
    for s in &report.splits {
        println!("{}: {} essays / {} arguments", s.name, thousands(s.essays), thousands(s.spans));
    }
    println!("rejected essays: {}", thousands(report.essay_errors.len()));
    println!("rejected annotation rows: {}", thousands(report.row_errors.len()));
    println!("orphaned annotation rows: {}", thousands(report.orphaned_rows.len()));
    for e in report.essay_errors.iter().take(LISTED_ISSUES) {
        eprintln!("essay {}: {}", e.essay_id, e.message);
    }
    for r in report.row_errors.iter().take(LISTED_ISSUES) {
        eprintln!("{} line {}: {}", args.annotations.display(), r.line, r.message);
    }
    for o in report.orphaned_rows.iter().take(LISTED_ISSUES) {
        log::info!("orphaned {} (essay {}): {}", o.discourse_id, o.essay_id, o.reason);
    }
    for m in report.manifest_errors.iter().chain(&report.warnings).take(LISTED_ISSUES) {
        eprintln!("warning: {m}");
    }
    if corpus.splits.iter().all(|s| s.essays.is_empty()) {
        return Err(Failure::usage(anyhow!("no usable essays were loaded")));
    }
    let json = serde_json::to_vec(&corpus).map_err(Failure::runtime)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Failure::runtime)?;
    }
    fs::write(&args.out, json)
        .with_context(|| format!("cannot write {}", args.out.display()))
        .map_err(Failure::runtime)?;
    println!("wrote {}", args.out.display());
    Ok(Outcome::Success)
}

pub fn load_bundle(path: &Path) -> Result<LoadedCorpus, Failure> {
    let file = fs::File::open(path).with_context(|| format!("cannot read corpus bundle {}", path.display()));
    let file = file.map_err(Failure::usage)?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("{} is not a corpus bundle (create one with `argmine ingest`)", path.display()))
        .map_err(Failure::usage)
}

fn split<'a>(corpus: &'a LoadedCorpus, name: SplitName, path: &Path) -> Result<&'a CorpusSplit, Failure> {
    corpus.split(name).ok_or_else(|| Failure::usage(anyhow!("{} has no {name} split", path.display())))
}

/// Where the shared inputs of a run or sweep come from.
struct Inputs {
    corpus_path: PathBuf,
    corpus: LoadedCorpus,
    split: SplitName,
    train_split: SplitName,
    out: PathBuf,
}

impl Inputs {
    fn test(&self) -> Result<&CorpusSplit, Failure> {
        split(&self.corpus, self.split, &self.corpus_path)
    }

    fn train(&self) -> Option<&CorpusSplit> {
        self.corpus.split(self.train_split)
    }
}

/// Runs one experiment and writes its files; a failure is recorded in the entry too.
fn execute(
    inputs: &Inputs,
    config: &ExperimentConfig,
    table: &mut ReportTable,
) -> (ManifestEntry, Option<anyhow::Error>) {
    let mut entry = ManifestEntry {
        experiment: config.label(),
        config_hash: config.hash(),
        config: config.clone(),
        artifacts: Vec::new(),
        error: None,
    };
    let outcome = (|| -> anyhow::Result<Vec<String>> {
        let factory = completer_factory(&config.model, &inputs.corpus).map_err(anyhow::Error::msg)?;
        let result = run_experiment::<f64>(
            inputs.test().map_err(|e| anyhow!("{e}"))?,
            inputs.train(),
            config,
            factory.as_ref(),
        )?;
        let writer = ExperimentWriter { root: &inputs.out, label: &entry.experiment, config_hash: &entry.config_hash };
        let artifacts = writer.experiment(&result)?;
        table.push_result(&result);
        println!("{}", argmine::report::render_text(&result.config, &result.config_hash, &result.aggregate));
        Ok(artifacts)
    })();
    match outcome {
        Ok(artifacts) => {
            entry.artifacts = artifacts;
            (entry, None)
        }
        Err(e) => {
            eprintln!("experiment {} failed: {e:#}", entry.experiment);
            entry.error = Some(format!("{e:#}"));
            (entry, Some(e))
        }
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    matches!(e.downcast_ref::<PipelineError>(), Some(PipelineError::Config(_) | PipelineError::Prompt(_)))
}

pub fn run(args: RunArgs) -> Result<Outcome, Failure> {
    let (file, mut inputs_digest) = match &args.config {
        Some(path) => {
            let (mut f, _): (RunFile, _) = config::load(path).map_err(Failure::usage)?;
            f.corpus = config::rebase(path, f.corpus.take());
            f.out = config::rebase(path, f.out.take());
            (f, vec![digest(path).map_err(Failure::usage)?])
        }
        None => (RunFile::default(), Vec::new()),
    };
    let mut table = file.experiment;
    merge(&mut table, args.experiment.to_table().map_err(Failure::usage)?);
    let config = experiment_from_table(table).map_err(Failure::usage)?;
    config.validate().map_err(Failure::usage)?;

    let corpus_path = args.corpus.or(file.corpus).ok_or_else(|| Failure::usage(anyhow!("--corpus is required")))?;
    let inputs = Inputs {
        corpus: load_bundle(&corpus_path)?,
        split: args.split.or(file.split).unwrap_or(SplitName::Test),
        train_split: args.train_split.or(file.train_split).unwrap_or(SplitName::Train),
        out: args.out.or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
        corpus_path,
    };
    inputs.test()?;
    inputs_digest.insert(0, digest(&inputs.corpus_path).map_err(Failure::usage)?);
    fs::create_dir_all(&inputs.out).map_err(Failure::usage)?;

    let mut manifest = output::new_manifest(inputs_digest);
    let mut report_table = ReportTable::default();
    let (entry, failed) = execute(&inputs, &config, &mut report_table);
    manifest.experiments.push(entry);
    output::write_table(&inputs.out, &report_table).map_err(Failure::runtime)?;
    output::write_manifest(&inputs.out, &mut manifest).map_err(Failure::runtime)?;
    match failed {
        None => {
            println!("wrote {}", inputs.out.display());
            Ok(Outcome::Success)
        }
        Some(e) => {
            // Configuration problems only surface once the corpus is known (missing shots).
            if is_config_error(&e) {
                Err(Failure::Usage(e))
            } else {
                Err(Failure::Runtime(e))
            }
        }
    }
}

pub fn sweep(args: SweepArgs) -> Result<Outcome, Failure> {
    let (mut file, _): (SweepFile, _) = config::load(&args.config).map_err(Failure::usage)?;
    if file.variants.is_empty() {
        return Err(Failure::usage(anyhow!("{} lists no [[variants]]", args.config.display())));
    }
    let corpus_path = args
        .corpus
        .or_else(|| config::rebase(&args.config, file.corpus.take()))
        .ok_or_else(|| Failure::usage(anyhow!("no corpus given (--corpus or `corpus =` in the sweep file)")))?;
    let inputs = Inputs {
        corpus: load_bundle(&corpus_path)?,
        split: file.split.unwrap_or(SplitName::Test),
        train_split: file.train_split.unwrap_or(SplitName::Train),
        out: args.out.or_else(|| config::rebase(&args.config, file.out.take())).unwrap_or_else(|| DEFAULT_OUT.into()),
        corpus_path,
    };
    inputs.test()?;
    fs::create_dir_all(&inputs.out).map_err(Failure::usage)?;
    let digests =
        vec![digest(&inputs.corpus_path).map_err(Failure::usage)?, digest(&args.config).map_err(Failure::usage)?];
    let mut manifest = output::new_manifest(digests);
    let mut report_table = ReportTable::default();

    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, variant) in file.variants.into_iter().enumerate() {
        let mut table: Table = file.defaults.clone();
        merge(&mut table, variant);
        let parsed = experiment_from_table(table).and_then(|mut c| {
            if let Some(endpoint) = &args.endpoint {
                c.model.endpoint = endpoint.clone();
            }
            c.validate()?;
            Ok(c)
        });
        let entry = match parsed {
            Ok(config) => {
                if let Some(first) = seen.insert(config.label(), i) {
                    failed_entry(i, config, format!("same experiment name as variant {}", first + 1))
                } else {
                    execute(&inputs, &config, &mut report_table).0
                }
            }
            Err(e) => {
                let config = ExperimentConfig { name: format!("variant-{}", i + 1), ..Default::default() };
                failed_entry(i, config, format!("{e:#}"))
            }
        };
        manifest.experiments.push(entry);
    }
    output::write_table(&inputs.out, &report_table).map_err(Failure::runtime)?;
    output::write_manifest(&inputs.out, &mut manifest).map_err(Failure::runtime)?;

    let failures = manifest.experiments.iter().filter(|e| e.error.is_some()).count();
    println!(
        "{} of {} variants completed; wrote {}",
        manifest.experiments.len() - failures,
        manifest.experiments.len(),
        inputs.out.display()
    );
    Ok(if failures == 0 { Outcome::Success } else { Outcome::Partial })
}

fn failed_entry(index: usize, config: ExperimentConfig, error: String) -> ManifestEntry {
    eprintln!("variant {} ({}) failed: {error}", index + 1, config.label());
    ManifestEntry {
        experiment: config.label(),
        config_hash: config.hash(),
        config,
        artifacts: Vec::new(),
        error: Some(error),
    }
}

pub fn evaluate(args: EvaluateArgs) -> Result<Outcome, Failure> {
    let corpus = load_bundle(&args.corpus)?;
    let test = split(&corpus, args.split, &args.corpus)?;

    // Runs of one experiment (same config hash) are aggregated together.
    let mut groups: BTreeMap<String, Vec<(argmine::pipeline::PredictionsHeader, EvalReport)>> = BTreeMap::new();
    let mut digests = vec![digest(&args.corpus).map_err(Failure::usage)?];
    for path in &args.predictions {
        let file =
            fs::File::open(path).with_context(|| format!("cannot read {}", path.display())).map_err(Failure::usage)?;
        let (header, predictions) = read_predictions(BufReader::new(file))
            .with_context(|| format!("{}", path.display()))
            .map_err(Failure::usage)?;
        let report = evaluate_predictions::<f64>(test, &header, &predictions)
            .with_context(|| format!("{}", path.display()))
            .map_err(Failure::usage)?;
        digests.push(digest(path).map_err(Failure::usage)?);
        groups.entry(header.config_hash.clone()).or_default().push((header, report));
    }

    let mut manifest = output::new_manifest(digests);
    let mut table = ReportTable::default();
    for (hash, mut runs) in groups {
        runs.sort_by_key(|(h, _)| h.run);
        let header = &runs[0].0;
        let config = ExperimentConfig {
            name: header.experiment.clone(),
            task: header.task,
            segmentation: header.segmentation_source,
            mode: header.mode,
            shots: header.shots,
            model: ModelConfig { model: header.model.clone(), ..ModelConfig::default() },
            runs: runs.len(),
            ..ExperimentConfig::default()
        };
        let reports: Vec<EvalReport> = runs.iter().map(|(_, r)| r.clone()).collect();
        let aggregate = aggregate_runs(&reports).map_err(Failure::runtime)?;
        println!("{}", argmine::report::render_text(&config, &hash, &aggregate));
        table.push_aggregate(&config, &hash, &aggregate);

        let mut entry = ManifestEntry {
            experiment: header.experiment.clone(),
            config_hash: hash.clone(),
            config: config.clone(),
            artifacts: Vec::new(),
            error: None,
        };
        if let Some(out) = &args.out {
            let writer = ExperimentWriter { root: out, label: &header.experiment, config_hash: &hash };
            for (h, report) in &runs {
                entry.artifacts.push(writer.run_report(h.run, report).map_err(Failure::runtime)?);
            }
            let refs: Vec<&EvalReport> = reports.iter().collect();
            entry.artifacts.extend(writer.summary(&config, &aggregate, &refs).map_err(Failure::runtime)?);
        }
        manifest.experiments.push(entry);
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(Failure::usage)?;
        output::write_table(out, &table).map_err(Failure::runtime)?;
        output::write_manifest(out, &mut manifest).map_err(Failure::runtime)?;
        println!("wrote {}", out.display());
    }
    Ok(Outcome::Success)
}
