//! End-to-end runs: segmentation, then per-argument or whole-essay classification, in
//! gold- or inferred-segmentation mode, repeated over runs and evaluated.

mod analyze;
mod predictions;
mod run;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use analyze::{analyze, AnalysisResult, AnalyzeError, AnalyzeOptions, AnalyzedSegment};
pub use predictions::{
    evaluate_predictions, read_predictions, write_predictions, EssayPrediction, ItemRecord, ItemStatus,
    PredictionsError, PredictionsHeader, SpanPrediction, PREDICTIONS_FORMAT,
};
pub use run::{
    classify_essay, run_experiment, run_once, segment_essay, CompleterFactory, ExperimentResult, HttpCompleterFactory,
    RunResult,
};

use crate::corpus::CorpusSplit;
use crate::inference::{ModelConfig, TransportError};
use crate::metrics::{MetricError, SegmentationSource};
use crate::prompt::{render_shot_example, PromptError, PromptMode, ShotExample, TaskKind, MAX_SHOTS};

pub const DEFAULT_RUNS: usize = 3;
pub const DEFAULT_PARALLELISM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    /// Type and quality predicted by separate prompts.
    Individual,
    /// One combined label per argument.
    Joint,
}

impl Setup {
    pub fn of(task: TaskKind) -> Self {
        if task == TaskKind::TypeAndQuality {
            Setup::Joint
        } else {
            Setup::Individual
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Setup::Individual => "individual",
            Setup::Joint => "joint",
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "individual" | "separate" => Ok(Setup::Individual),
            "joint" | "together" => Ok(Setup::Joint),
            other => Err(format!("unknown setup {other:?} (expected individual or joint)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: TaskKind,
    pub segmentation: SegmentationSource,
    pub mode: PromptMode,
    pub shots: usize,
    pub model: ModelConfig,
    pub runs: usize,
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            task: TaskKind::TypeAndQuality,
            segmentation: SegmentationSource::Gold,
            mode: PromptMode::FewShot,
            shots: 0,
            model: ModelConfig::default(),
            runs: DEFAULT_RUNS,
            parallelism: DEFAULT_PARALLELISM,
        }
    }
}

impl ExperimentConfig {
    pub fn setup(&self) -> Setup {
        Setup::of(self.task)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.shots > MAX_SHOTS {
            return fail(format!("shots must be between 0 and {MAX_SHOTS}, got {}", self.shots));
        }
        if self.mode == PromptMode::FineTuned && self.shots != 0 {
            return fail("fine-tuned mode takes no shot examples".into());
        }
        if self.task == TaskKind::Segmentation && self.segmentation == SegmentationSource::Gold {
            return fail("the segmentation task needs inferred segmentation".into());
        }
        if self.runs == 0 {
            return fail("runs must be at least 1".into());
        }
        if self.parallelism == 0 {
            return fail("parallelism must be at least 1".into());
        }
        self.model.validate().map_err(PipelineError::Config)
    }

    /// Short identifier: explicit name, or one derived from the settings.
    pub fn label(&self) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        let mode = match self.mode {
            PromptMode::FewShot => format!("{}shot", self.shots),
            PromptMode::FineTuned => "finetuned".into(),
        };
        format!("{}-{}-{}-{}", self.task, self.segmentation, mode, self.model.model)
    }

    /// SHA-256 over the canonical JSON form of the configuration (secrets excluded).
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("cannot reach the model: {0}")]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Predictions(#[from] PredictionsError),
    #[error("no essay was processed successfully ({essays} attempted)")]
    ExperimentFailed { essays: usize },
}

/// Shot examples for a configuration, the first `k` training essays in id order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSet {
    pub segmentation: Vec<ShotExample>,
    pub classification: Vec<ShotExample>,
}

impl ShotSet {
    pub fn from_training(train: Option<&CorpusSplit>, task: TaskKind, k: usize) -> Result<Self, PipelineError> {
        if k == 0 {
            return Ok(Self::default());
        }
        if k > MAX_SHOTS {
            return Err(PromptError::TooManyShots { given: k }.into());
        }
        let train = train.ok_or_else(|| PipelineError::Config(format!("{k} shots requested but no training split")))?;
        let mut essays: Vec<_> = train.essays.iter().filter(|e| !e.spans.is_empty()).collect();
        essays.sort_by(|a, b| a.essay.id.cmp(&b.essay.id));
        if essays.len() < k {
            return Err(PipelineError::Config(format!(
                "{k} shots requested but the training split has {} annotated essays",
                essays.len()
            )));
        }
        let picked = &essays[..k];
        let classification = if task.is_classification() {
            picked.iter().map(|e| render_shot_example(e, task)).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            segmentation: picked.iter().map(|e| render_shot_example(e, TaskKind::Segmentation)).collect(),
            classification,
        })
    }
}

/// Applies `f` to every item on at most `limit` threads. Results come back in item order
/// whatever order they complete in.
pub fn parallel_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = limit.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().unwrap().expect("every slot is filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..50).collect();
        let out = parallel_map(&items, 8, |i, &x| {
            std::thread::sleep(std::time::Duration::from_micros((50 - x) * 20));
            (i, x * 2)
        });
        assert_eq!(out, items.iter().enumerate().map(|(i, &x)| (i, x * 2)).collect::<Vec<_>>());
        assert!(parallel_map(&[] as &[u8], 4, |_, _| 0).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let c = ExperimentConfig { shots: 5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ExperimentConfig { mode: PromptMode::FineTuned, shots: 2, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ExperimentConfig { task: TaskKind::Segmentation, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_settings_not_secrets() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.model.api_key = Some("k".into());
        assert_eq!(a.hash(), b.hash());
        b.shots = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn setup_follows_task() {
        assert_eq!(Setup::of(TaskKind::TypeAndQuality), Setup::Joint);
        assert_eq!(Setup::of(TaskKind::QualityOnly), Setup::Individual);
    }
}
