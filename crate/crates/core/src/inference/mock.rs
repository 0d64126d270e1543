//! In-process completers for tests, dry runs, and the `mock:` endpoints of the CLI.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{Completer, TransportError};
use crate::corpus::{AnnotatedEssay, ArgType, QualityLabel};
use crate::parse::LabelAnswer;
use crate::prompt::{prompt_essay, render_shot_example, split_segments, Prompt, PromptMode, TaskKind, SEP};

/// Replays a fixed sequence of results, then fails every further call.
#[derive(Debug, Default)]
pub struct ScriptedCompleter {
    script: Mutex<VecDeque<Result<String, TransportError>>>,
    calls: AtomicUsize,
}

impl ScriptedCompleter {
    pub fn new<S: Into<String>>(outputs: impl IntoIterator<Item = S>) -> Self {
        Self::from_results(outputs.into_iter().map(|s| Ok(s.into())).collect())
    }

    pub fn from_results(results: Vec<Result<String, TransportError>>) -> Self {
        Self { script: Mutex::new(results.into()), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Completer for ScriptedCompleter {
    fn complete(&self, _prompt: &Prompt) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Protocol("script exhausted".into())))
    }
}

/// Wraps a closure.
pub struct FnCompleter<F>(pub F);

impl<F> Completer for FnCompleter<F>
where
    F: Fn(&Prompt) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError> {
        (self.0)(prompt)
    }
}

/// Forwards to `inner` and keeps every prompt it saw.
#[derive(Debug)]
pub struct RecordingCompleter<C> {
    inner: C,
    prompts: Mutex<Vec<Prompt>>,
}

impl<C: Completer> RecordingCompleter<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, prompts: Mutex::new(Vec::new()) }
    }

    pub fn prompts(&self) -> Vec<Prompt> {
        self.prompts.lock().unwrap().clone()
    }

    pub fn count(&self, task: TaskKind) -> usize {
        self.prompts.lock().unwrap().iter().filter(|p| p.task == task).count()
    }
}

impl<C: Completer> Completer for RecordingCompleter<C> {
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError> {
        self.prompts.lock().unwrap().push(prompt.clone());
        self.inner.complete(prompt)
    }
}

/// Answers every prompt with the gold annotation of the essay it was built for: the
/// gold SEP rendering for segmentation, the gold label object for few-shot
/// classification, and the gold interleaved rendering for fine-tuned classification.
#[derive(Debug, Clone, Default)]
pub struct GoldOracle {
    essays: HashMap<String, AnnotatedEssay>,
    fallback: Option<AnnotatedEssay>,
}

impl GoldOracle {
    pub fn new<'a>(essays: impl IntoIterator<Item = &'a AnnotatedEssay>) -> Self {
        Self { essays: essays.into_iter().map(|e| (e.essay.id.clone(), e.clone())).collect(), fallback: None }
    }

    /// Answers for `essay` whatever essay id a prompt carries.
    pub fn single(essay: &AnnotatedEssay) -> Self {
        Self { fallback: Some(essay.clone()), ..Self::new([essay]) }
    }

    fn essay(&self, prompt: &Prompt) -> Result<&AnnotatedEssay, TransportError> {
        let id = prompt.essay_id.as_deref().unwrap_or_default();
        self.essays
            .get(id)
            .or(self.fallback.as_ref())
            .ok_or_else(|| TransportError::Protocol(format!("unknown essay {id:?}")))
    }
}

impl Completer for GoldOracle {
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError> {
        let essay = self.essay(prompt)?;
        if prompt.task == TaskKind::Segmentation || prompt.mode == PromptMode::FineTuned {
            return Ok(render_shot_example(essay, prompt.task).text);
        }
        let index = prompt.target_argument_index.unwrap_or(0);
        let span = essay
            .spans
            .get(index)
            .or(essay.spans.last())
            .ok_or_else(|| TransportError::Protocol(format!("essay {} has no spans", essay.essay.id)))?;
        Ok(LabelAnswer::for_task(prompt.task, span.arg_type, span.quality).to_object(prompt.task))
    }
}

/// A stand-in model for demos and interface work. It makes one argument of each paragraph
/// (of each sentence when there is a single paragraph) and labels them by position: Lead
/// first, then Position, Claims, and a Concluding Statement last, all Adequate.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParagraphMock;

impl ParagraphMock {
    fn label(index: usize, count: usize) -> (ArgType, QualityLabel) {
        let arg_type = match index {
            0 => ArgType::Lead,
            i if count > 2 && i + 1 == count => ArgType::ConcludingStatement,
            1 => ArgType::Position,
            _ => ArgType::Claim,
        };
        (arg_type, QualityLabel::Adequate)
    }

    fn segment(text: &str) -> String {
        let paragraphs: Vec<&str> = text.split("\n\n").filter(|p| !p.trim().is_empty()).collect();
        let pieces: Vec<&str> = if paragraphs.len() > 1 { paragraphs } else { sentences(text) };
        pieces.iter().map(|p| format!("{} {SEP}", p.trim())).collect::<Vec<_>>().join("\n\n")
    }
}

fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|(_, n)| n.is_whitespace()) {
            out.push(&text[start..=i]);
            start = i + 1;
        }
    }
    if !text[start..].trim().is_empty() {
        out.push(&text[start..]);
    }
    out
}

impl Completer for ParagraphMock {
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError> {
        let essay = prompt_essay(prompt);
        if prompt.task == TaskKind::Segmentation {
            return Ok(Self::segment(essay));
        }
        let segments = split_segments(essay);
        let answer = |i: usize| {
            let (t, q) = Self::label(i, segments.len());
            LabelAnswer::for_task(prompt.task, t, q)
        };
        if prompt.mode == PromptMode::FineTuned {
            let out: Vec<String> =
                segments.iter().enumerate().map(|(i, s)| format!("{s} {}", answer(i).marker())).collect();
            return Ok(out.join(" "));
        }
        Ok(answer(prompt.target_argument_index.unwrap_or(0)).to_object(prompt.task))
    }
}
