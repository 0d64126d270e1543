//! Fixtures shared by the test suites: a seeded synthetic corpus, the Isaac example
//! essay, an on-disk corpus writer, and a seeded noisy oracle.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{AnnotatedEssay, ArgType, CorpusSplit, Essay, GoldSpan, Label, QualityLabel, SplitName};
use crate::inference::mock::GoldOracle;
use crate::inference::{Completer, TransportError};
use crate::parse::{parse_interleaved, parse_label_object, LabelAnswer};
use crate::prompt::{Prompt, PromptMode, TaskKind};

const WORDS: &[&str] = &[
    "students",
    "should",
    "phones",
    "school",
    "because",
    "learning",
    "community",
    "service",
    "summer",
    "projects",
    "teachers",
    "online",
    "classes",
    "venus",
    "mars",
    "face",
    "landform",
    "driverless",
    "cars",
    "emotions",
    "technology",
    "extracurricular",
    "activities",
    "seagoing",
    "cowboys",
    "program",
    "advice",
    "multiple",
    "people",
    "electoral",
    "college",
    "popular",
    "vote",
    "distance",
    "help",
    "work",
    "time",
    "better",
    "important",
    "think",
    "believe",
    "evidence",
    "shows",
    "however",
    "some",
    "argue",
    "that",
    "this",
    "would",
    "could",
    "many",
    "more",
    "less",
    "every",
    "their",
    "world",
    "ideas",
    "choices",
    "success",
    "decide",
    "opinion",
    "reason",
    "example",
];

/// The Isaac sample essay from the prompt format tables, with its four labelled segments
/// (Lead/Adequate, Position/Adequate, Claim/Adequate, Concluding Statement/Ineffective)
/// as paragraphs.
pub fn isaac_essay() -> AnnotatedEssay {
    let segments: [(&str, ArgType, QualityLabel); 4] = [
        (
            "Hi, i'm Isaac, i'm going to be writing about how this face on Mars is a natural landform or if there is life on Mars that made it. The story is about how NASA took a picture of Mars and a face was seen on the planet. NASA doesn't know if the landform was created by life on Mars, or if it is just a natural landform.",
            ArgType::Lead,
            QualityLabel::Adequate,
        ),
        (
            "On my perspective, I think that the face is a natural landform because I dont think that there is any life on Mars. In these next few paragraphs, I'll be talking about how I think that is is a natural landform",
            ArgType::Position,
            QualityLabel::Adequate,
        ),
        (
            "I think that the face is a natural landform because there is no life on Mars that we have descovered yet",
            ArgType::Claim,
            QualityLabel::Adequate,
        ),
        (
            "Though people were not satified about how the landform was a natural landform, in all, we new that alieans did not form the face. I would like to know how the landform was formed. we know now that life on Mars doesn't exist.",
            ArgType::ConcludingStatement,
            QualityLabel::Ineffective,
        ),
    ];
    let text = segments.iter().map(|s| s.0).collect::<Vec<_>>().join("\n\n");
    let essay = Essay::new("ISAAC", text);
    let mut start = 0;
    let spans = segments
        .iter()
        .enumerate()
        .map(|(i, (seg, t, q))| {
            let len = seg.split_whitespace().count();
            let span = GoldSpan {
                essay_id: "ISAAC".into(),
                discourse_id: format!("ISAAC-{i}"),
                index: i,
                start_token: start,
                end_token: start + len,
                arg_type: *t,
                quality: *q,
            };
            start += len;
            span
        })
        .collect();
    AnnotatedEssay { essay, spans }
}

/// The published joint-setup output example (markup removed), including
/// its elision and irregular spacing.
pub const ISAAC_JOINT_OUTPUT: &str = "Hi, i'm Isaac, i'm going to be writing about how this face on Mars is a natural landform or if there is life on Mars that made it. The story is about how NASA took a picture of Mars and a face was seen on the planet. NASA doesn't know if the landform was created by life on Mars, or if it is just a natural landform. <Lead, Adequate >. On my perspective, I think that the face is a natural landform because I dont think that there is any life on Mars. In these next few paragraphs, I'll be talking about how I think that is is a natural landform <Position, Adequate> I think that the face is a natural landform because there is no life on Mars that we have descovered yet <Claim, Adequate> [...] Though people were not satified about how the landform was a natural landform, in all, we new that alieans did not form the face. I would like to know how the landform was formed. we know now that life on Mars doesn't exist. <Concluding Statement, Ineffective>";

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(4..=11);
    let mut words: Vec<String> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()).collect();
    let first = words[0].remove(0).to_ascii_uppercase();
    words[0].insert(0, first);
    // A unique-ish tag keeps located span texts unambiguous.
    words.push(format!("n{}.", rng.random_range(0..1_000_000u32)));
    words.join(" ")
}

/// `n` essays drawn from `seed`. Labels cycle through every type and quality; about one
/// essay in four has an unannotated sentence between spans and one in five has trailing
/// unannotated text.
pub fn synthetic_essays(n: usize, seed: u64, id_prefix: &str) -> Vec<AnnotatedEssay> {
    generate(n, seed, id_prefix, true)
}

/// Like [`synthetic_essays`] but the spans cover every token.
pub fn tiled_essays(n: usize, seed: u64, id_prefix: &str) -> Vec<AnnotatedEssay> {
    generate(n, seed, id_prefix, false)
}

fn generate(n: usize, seed: u64, id_prefix: &str, gaps: bool) -> Vec<AnnotatedEssay> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut types: Vec<ArgType> = Vec::new();
    let mut qualities: Vec<QualityLabel> = Vec::new();
    let mut next_label = |rng: &mut ChaCha8Rng| {
        if types.is_empty() {
            types = ArgType::ALL.to_vec();
            types.shuffle(rng);
        }
        if qualities.is_empty() {
            qualities = QualityLabel::ALL.to_vec();
            qualities.shuffle(rng);
        }
        (types.pop().unwrap(), qualities.pop().unwrap())
    };

    (0..n)
        .map(|e| {
            let id = format!("{id_prefix}{e:04X}");
            let span_count = rng.random_range(3..=7);
            let gap_at = (gaps && rng.random_range(0..4) == 0).then(|| rng.random_range(1..span_count));
            let mut text = String::new();
            let mut token = 0;
            let mut spans = Vec::with_capacity(span_count);
            for s in 0..span_count {
                if gap_at == Some(s) {
                    let gap = sentence(&mut rng);
                    token += gap.split_whitespace().count();
                    text.push_str(&gap);
                    text.push(' ');
                }
                let body = (0..rng.random_range(1..=3)).map(|_| sentence(&mut rng)).collect::<Vec<_>>().join(" ");
                let len = body.split_whitespace().count();
                let (arg_type, quality) = next_label(&mut rng);
                spans.push(GoldSpan {
                    essay_id: id.clone(),
                    discourse_id: format!("{id}-{s}"),
                    index: s,
                    start_token: token,
                    end_token: token + len,
                    arg_type,
                    quality,
                });
                token += len;
                text.push_str(&body);
                text.push_str(if rng.random_range(0..3) == 0 { "\n\n" } else { " " });
            }
            if gaps && rng.random_range(0..5) == 0 {
                text.push_str(&sentence(&mut rng));
                text.push('\n');
            }
            AnnotatedEssay { essay: Essay::new(id, text), spans }
        })
        .collect()
}

/// A test split of `n` synthetic essays and a four-essay training split.
pub fn synthetic_splits(n: usize, seed: u64) -> (CorpusSplit, CorpusSplit) {
    let test = CorpusSplit { name: SplitName::Test, essays: synthetic_essays(n, seed, "T") };
    let train = CorpusSplit { name: SplitName::Train, essays: synthetic_essays(4, seed ^ 0x5eed, "R") };
    (test, train)
}

#[derive(Debug, Clone)]
pub struct CorpusFiles {
    pub essay_dir: PathBuf,
    pub annotations: PathBuf,
    pub manifest: PathBuf,
}

/// Writes splits in the on-disk layout the loader reads: `essays/<id>.txt`, an
/// annotation table, and a split manifest.
pub fn write_corpus(dir: &Path, splits: &[&CorpusSplit]) -> io::Result<CorpusFiles> {
    let essay_dir = dir.join("essays");
    fs::create_dir_all(&essay_dir)?;
    let annotations = dir.join("annotations.csv");
    let manifest = dir.join("splits.csv");
    let mut table = csv::Writer::from_path(&annotations)?;
    table.write_record(["discourse_id", "essay_id", "discourse_text", "discourse_type", "discourse_effectiveness"])?;
    let mut split_table = csv::Writer::from_path(&manifest)?;
    split_table.write_record(["essay_id", "split"])?;
    for split in splits {
        for e in &split.essays {
            fs::write(essay_dir.join(format!("{}.txt", e.essay.id)), &e.essay.raw_text)?;
            split_table.write_record([e.essay.id.as_str(), split.name.as_str()])?;
            for s in &e.spans {
                table.write_record([
                    s.discourse_id.as_str(),
                    e.essay.id.as_str(),
                    e.essay.span_text(s.tokens()),
                    s.arg_type.name(),
                    s.quality.name(),
                ])?;
            }
        }
    }
    table.flush()?;
    split_table.flush()?;
    Ok(CorpusFiles { essay_dir, annotations, manifest })
}

/// Gold answers with each classification label independently replaced by a random one
/// with probability `flip`. Draws depend only on the seed and the prompt, never on call
/// order, so results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    gold: GoldOracle,
    seed: u64,
    flip: f64,
}

impl NoisyOracle {
    pub fn new<'a>(essays: impl IntoIterator<Item = &'a AnnotatedEssay>, seed: u64, flip: f64) -> Self {
        Self { gold: GoldOracle::new(essays), seed, flip }
    }

    fn rng_for(&self, prompt: &Prompt) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(prompt.body.as_bytes());
        h.update(prompt.essay_id.as_deref().unwrap_or_default().as_bytes());
        h.update(prompt.target_argument_index.unwrap_or(usize::MAX).to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn perturb(&self, answer: LabelAnswer, rng: &mut ChaCha8Rng) -> LabelAnswer {
        let mut t = answer.arg_type();
        let mut q = answer.quality();
        if t.is_some() && rng.random_bool(self.flip) {
            t = Some(ArgType::ALL[rng.random_range(0..ArgType::ALL.len())]);
        }
        if q.is_some() && rng.random_bool(self.flip) {
            q = Some(QualityLabel::ALL[rng.random_range(0..QualityLabel::ALL.len())]);
        }
        match (t, q) {
            (Some(arg_type), Some(quality)) => LabelAnswer::Both { arg_type, quality },
            (Some(arg_type), None) => LabelAnswer::Type { arg_type },
            (None, Some(quality)) => LabelAnswer::Quality { quality },
            (None, None) => answer,
        }
    }
}

impl Completer for NoisyOracle {
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError> {
        let gold = self.gold.complete(prompt)?;
        if prompt.task == TaskKind::Segmentation {
            return Ok(gold);
        }
        let mut rng = self.rng_for(prompt);
        let bad = |e| TransportError::Protocol(format!("oracle produced unparseable output: {e}"));
        match prompt.mode {
            PromptMode::FewShot => {
                let answer = parse_label_object(&gold, prompt.task).map_err(bad)?;
                Ok(self.perturb(answer, &mut rng).to_object(prompt.task))
            }
            PromptMode::FineTuned => {
                let parsed = parse_interleaved(&gold, prompt.task).map_err(bad)?;
                Ok(parsed
                    .segments
                    .iter()
                    .map(|s| format!("{} {}", s.text, self.perturb(s.answer, &mut rng).marker()))
                    .collect::<Vec<_>>()
                    .join("\n"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_corpus_is_valid_and_covers_labels() {
        let essays = synthetic_essays(20, 7, "T");
        assert_eq!(essays.len(), 20);
        for e in &essays {
            e.validate().unwrap();
        }
        let types: std::collections::BTreeSet<_> =
            essays.iter().flat_map(|e| e.spans.iter().map(|s| s.arg_type)).collect();
        let qualities: std::collections::BTreeSet<_> =
            essays.iter().flat_map(|e| e.spans.iter().map(|s| s.quality)).collect();
        assert_eq!(types.len(), 7);
        assert_eq!(qualities.len(), 3);
        assert_eq!(synthetic_essays(20, 7, "T"), essays);
        for e in tiled_essays(20, 7, "T") {
            assert_eq!(e.gold_ranges(), e.gold_partition());
        }
    }

    #[test]
    fn isaac_spans_tile_text() {
        let e = isaac_essay();
        e.validate().unwrap();
        assert_eq!(e.spans.last().unwrap().end_token, e.essay.token_count());
        assert!(e.essay.span_text(e.spans[2].tokens()).ends_with("descovered yet"));
    }
}
