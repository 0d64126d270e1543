use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::predictions::{
    evaluate_predictions, EssayPrediction, ItemRecord, PredictionsHeader, SpanPrediction, PREDICTIONS_FORMAT,
};
use super::{parallel_map, ExperimentConfig, PipelineError, ShotSet};
use crate::corpus::{partition_from_ends, AnnotatedEssay, CorpusSplit, Essay};
use crate::inference::{complete_validated, Completer, CompletionOutcome, HttpCompleter, ModelConfig, TransportError};
use crate::metrics::{aggregate_runs, AggregateReport, EvalReport, Score, SegmentationSource};
use crate::parse::{make_validator, LabelAnswer, Parsed, PredictedSegmentation};
use crate::prompt::{
    build_classification_prompt, build_finetuned_prompt, build_segmentation_prompt, render_segmented, PromptMode,
    ShotExample, TaskKind,
};

/// Builds the completer for each run of an experiment.
pub trait CompleterFactory: Sync {
    fn completer(&self, model: &ModelConfig, run: usize) -> Result<Box<dyn Completer>, TransportError>;
}

impl<F> CompleterFactory for F
where
    F: Fn(&ModelConfig, usize) -> Result<Box<dyn Completer>, TransportError> + Sync,
{
    fn completer(&self, model: &ModelConfig, run: usize) -> Result<Box<dyn Completer>, TransportError> {
        self(model, run)
    }
}

/// HTTP completers; run `r` uses seed `seed + r` when a seed is configured.
#[derive(Debug, Clone, Copy, Default)]
pub struct HttpCompleterFactory;

impl CompleterFactory for HttpCompleterFactory {
    fn completer(&self, model: &ModelConfig, run: usize) -> Result<Box<dyn Completer>, TransportError> {
        let mut model = model.clone();
        model.seed = model.seed.map(|s| s.wrapping_add(run as u64));
        Ok(Box::new(HttpCompleter::new(model)?))
    }
}

/// Asks the model to segment `essay`.
pub fn segment_essay(
    essay: &Essay,
    mode: PromptMode,
    shots: &[ShotExample],
    completer: &dyn Completer,
    transport_retries: u32,
) -> Result<CompletionOutcome<PredictedSegmentation>, PipelineError> {
    let prompt = match mode {
        PromptMode::FewShot => build_segmentation_prompt(essay, shots)?,
        PromptMode::FineTuned => build_finetuned_prompt(essay.text(), TaskKind::Segmentation).with_essay_id(&essay.id),
    };
    let validator = make_validator(TaskKind::Segmentation, mode, essay);
    let outcome = complete_validated(completer, &prompt, |raw| validator.check(raw), transport_retries);
    Ok(outcome.map(|parsed| match parsed {
        Parsed::Segmentation(s) => s,
        other => unreachable!("segmentation validator produced {other:?}"),
    }))
}

/// One classification call with retries: segment `target` in few-shot mode, or the whole
/// essay when `target` is `None` (fine-tuned mode).
#[allow(clippy::too_many_arguments)]
fn classify_target(
    essay: &Essay,
    partition: &[Range<usize>],
    segmented: &str,
    target: Option<usize>,
    task: TaskKind,
    mode: PromptMode,
    shots: &[ShotExample],
    completer: &dyn Completer,
    transport_retries: u32,
) -> Result<CompletionOutcome<Vec<LabelAnswer>>, PipelineError> {
    let prompt = match target {
        Some(i) => build_classification_prompt(segmented, i, task, shots)?,
        None => build_finetuned_prompt(segmented, task),
    }
    .with_essay_id(&essay.id);
    let validator = make_validator(task, mode, essay).expecting_segments(partition.len());
    let check = |raw: &str| {
        validator.check(raw).map(|parsed| match parsed {
            Parsed::Label(a) => vec![a],
            Parsed::Interleaved(p) => p.answers(),
            other => unreachable!("classification validator produced {other:?}"),
        })
    };
    Ok(complete_validated(completer, &prompt, check, transport_retries))
}

fn targets(mode: PromptMode, segments: usize) -> Vec<Option<usize>> {
    match mode {
        PromptMode::FewShot => (0..segments).map(Some).collect(),
        PromptMode::FineTuned => vec![None],
    }
}

/// Classifies the segments of `essay`. Few-shot mode returns one outcome per segment,
/// fine-tuned mode a single outcome covering all segments.
#[allow(clippy::too_many_arguments)]
pub fn classify_essay(
    essay: &Essay,
    partition: &[Range<usize>],
    task: TaskKind,
    mode: PromptMode,
    shots: &[ShotExample],
    completer: &dyn Completer,
    transport_retries: u32,
    parallelism: usize,
) -> Result<Vec<CompletionOutcome<Vec<LabelAnswer>>>, PipelineError> {
    let segmented = render_segmented(essay, partition);
    parallel_map(&targets(mode, partition.len()), parallelism, |_, &target| {
        classify_target(essay, partition, &segmented, target, task, mode, shots, completer, transport_retries)
    })
    .into_iter()
    .collect()
}

/// Closes spans into a partition: the last one runs to the end of the essay.
fn closing_partition(spans: &[Range<usize>], token_count: usize) -> Vec<Range<usize>> {
    let mut ends: Vec<usize> = spans.iter().map(|s| s.end).collect();
    if let Some(last) = ends.last_mut() {
        *last = token_count;
    }
    partition_from_ends(&ends)
}

struct Segmented {
    record: ItemRecord,
    /// Scored ranges; `None` when segmentation failed.
    ranges: Option<Vec<Range<usize>>>,
}

struct ClassificationItem {
    essay: usize,
    /// Segment index, or `None` for a whole-essay call.
    target: Option<usize>,
}

/// One pass over `essays`: segmentation (unless gold), then classification.
pub fn run_once(
    essays: &[AnnotatedEssay],
    config: &ExperimentConfig,
    shots: &ShotSet,
    completer: &dyn Completer,
) -> Result<Vec<EssayPrediction>, PipelineError> {
    let retries = config.model.transport_retries;
    let segmented: Vec<Segmented> = match config.segmentation {
        SegmentationSource::Gold => {
            essays.iter().map(|e| Segmented { record: ItemRecord::gold(), ranges: Some(e.gold_ranges()) }).collect()
        }
        SegmentationSource::Inferred => parallel_map(essays, config.parallelism, |_, e| {
            segment_essay(&e.essay, config.mode, &shots.segmentation, completer, retries).map(|outcome| Segmented {
                record: ItemRecord::from_outcome(&outcome),
                ranges: outcome.valid().map(|s| s.spans()),
            })
        })
        .into_iter()
        .collect::<Result<_, _>>()?,
    };

    let mut predictions: Vec<EssayPrediction> = essays
        .iter()
        .zip(&segmented)
        .map(|(e, s)| EssayPrediction {
            essay_id: e.essay.id.clone(),
            token_count: e.essay.token_count(),
            segmentation: s.record.clone(),
            classification: None,
            spans: s
                .ranges
                .iter()
                .flatten()
                .map(|r| SpanPrediction {
                    start_token: r.start,
                    end_token: r.end,
                    arg_type: None,
                    quality: None,
                    classification: None,
                })
                .collect(),
        })
        .collect();
    if !config.task.is_classification() {
        return Ok(predictions);
    }

    let partitions: Vec<Option<Vec<Range<usize>>>> = essays
        .iter()
        .zip(&segmented)
        .map(|(e, s)| s.ranges.as_ref().map(|r| closing_partition(r, e.essay.token_count())))
        .collect();
    let segmented_texts: Vec<Option<String>> =
        essays.iter().zip(&partitions).map(|(e, p)| p.as_ref().map(|p| render_segmented(&e.essay, p))).collect();
    let items: Vec<ClassificationItem> = partitions
        .iter()
        .enumerate()
        .flat_map(|(essay, p)| {
            let targets = p.as_ref().map(|p| targets(config.mode, p.len())).unwrap_or_default();
            targets.into_iter().map(move |target| ClassificationItem { essay, target })
        })
        .collect();

    let outcomes = parallel_map(&items, config.parallelism, |_, item| {
        let essay = &essays[item.essay].essay;
        let partition = partitions[item.essay].as_ref().expect("only segmented essays are classified");
        let segmented = segmented_texts[item.essay].as_ref().expect("rendered with the partition");
        classify_target(
            essay,
            partition,
            segmented,
            item.target,
            config.task,
            config.mode,
            &shots.classification,
            completer,
            retries,
        )
    });

    for (item, outcome) in items.iter().zip(outcomes) {
        let outcome = outcome?;
        let record = ItemRecord::from_outcome(&outcome);
        let answers = outcome.valid();
        match item.target {
            Some(span) => {
                let target = &mut predictions[item.essay].spans[span];
                if let Some(answer) = answers.as_ref().and_then(|a| a.first()) {
                    target.arg_type = answer.arg_type();
                    target.quality = answer.quality();
                }
                target.classification = Some(record);
            }
            None => {
                let p = &mut predictions[item.essay];
                if let Some(answers) = &answers {
                    for (span, answer) in p.spans.iter_mut().zip(answers) {
                        span.arg_type = answer.arg_type();
                        span.quality = answer.quality();
                    }
                }
                p.classification = Some(record);
            }
        }
    }
    Ok(predictions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct RunResult<S> {
    pub header: PredictionsHeader,
    pub predictions: Vec<EssayPrediction>,
    pub report: EvalReport<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct ExperimentResult<S> {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub runs: Vec<RunResult<S>>,
    pub aggregate: AggregateReport<S>,
}

/// Runs `config.runs` repetitions over `test` and aggregates their reports. Shot
/// examples come from `train`.
pub fn run_experiment<S: Score>(
    test: &CorpusSplit,
    train: Option<&CorpusSplit>,
    config: &ExperimentConfig,
    factory: &dyn CompleterFactory,
) -> Result<ExperimentResult<S>, PipelineError> {
    config.validate()?;
    let shots = ShotSet::from_training(train, config.task, config.shots)?;
    let config_hash = config.hash();
    let mut runs = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        log::info!("{}: run {}/{} over {} essays", config.label(), run + 1, config.runs, test.essays.len());
        let completer = factory.completer(&config.model, run)?;
        let predictions = run_once(&test.essays, config, &shots, completer.as_ref())?;
        if !test.essays.is_empty() && !predictions.iter().any(|p| p.processed(config.task)) {
            return Err(PipelineError::ExperimentFailed { essays: test.essays.len() });
        }
        let header = PredictionsHeader {
            format: PREDICTIONS_FORMAT.into(),
            experiment: config.label(),
            config_hash: config_hash.clone(),
            task: config.task,
            segmentation_source: config.segmentation,
            mode: config.mode,
            shots: config.shots,
            model: config.model.model.clone(),
            run,
            essays: predictions.len(),
        };
        let report = evaluate_predictions(test, &header, &predictions)?;
        runs.push(RunResult { header, predictions, report });
    }
    let reports: Vec<EvalReport<S>> = runs.iter().map(|r| r.report.clone()).collect();
    let aggregate = aggregate_runs(&reports)?;
    Ok(ExperimentResult { config: config.clone(), config_hash, runs, aggregate })
}
