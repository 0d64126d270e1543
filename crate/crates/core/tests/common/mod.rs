//! Independent reference implementations the library is checked against, plus random
//! instance generators. Nothing here calls into the code under test except for types.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::PathBuf;

use argmine::corpus::{AnnotatedEssay, ArgType, CorpusSplit, Essay, GoldSpan, Label, QualityLabel, SplitName};
use argmine::metrics::{BioTag, PredSpan};
use argmine::pipeline::ShotSet;
use argmine::prompt::{
    build_classification_prompt, build_finetuned_prompt, build_segmentation_prompt, render_segmented, Prompt, TaskKind,
    MAX_SHOTS,
};
use argmine::testkit::{isaac_essay, synthetic_essays};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Up to `max_spans` disjoint non-empty spans over `n` tokens, in order, with random gaps.
pub fn random_disjoint_spans(rng: &mut ChaCha8Rng, n: usize, max_spans: usize) -> Vec<Range<usize>> {
    let k = rng.random_range(0..=max_spans.min(n));
    let mut cuts: BTreeSet<usize> = BTreeSet::new();
    while cuts.len() < 2 * k {
        cuts.insert(rng.random_range(0..=n));
        if cuts.len() == n + 1 {
            break;
        }
    }
    let cuts: Vec<usize> = cuts.into_iter().collect();
    cuts.chunks_exact(2).filter(|c| c[1] > c[0]).map(|c| c[0]..c[1]).collect()
}

/// A random partition of `0..n` into at most `max_parts` non-empty ranges.
pub fn random_partition(rng: &mut ChaCha8Rng, n: usize, max_parts: usize) -> Vec<Range<usize>> {
    assert!(n > 0);
    let parts = rng.random_range(1..=max_parts.min(n));
    let mut cuts: BTreeSet<usize> = BTreeSet::from([0, n]);
    while cuts.len() < parts + 1 {
        cuts.insert(rng.random_range(1..n));
    }
    let cuts: Vec<usize> = cuts.into_iter().collect();
    cuts.windows(2).map(|w| w[0]..w[1]).collect()
}

/// Every pair whose overlap exceeds half of both spans, by enumeration.
pub fn oracle_matches(gold: &[Range<usize>], pred: &[Range<usize>]) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for (gi, g) in gold.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            let inter = (g.start..g.end).filter(|t| p.contains(t)).count() as f64;
            let o_gold = inter / g.len() as f64;
            let o_pred = inter / p.len() as f64;
            if o_gold.min(o_pred) > 0.5 {
                out.insert((gi, pi));
            }
        }
    }
    out
}

pub fn oracle_bio(n: usize, spans: &[Range<usize>]) -> Vec<BioTag> {
    (0..n)
        .map(|t| match spans.iter().find(|s| s.contains(&t)) {
            Some(s) if s.start == t => BioTag::B,
            Some(_) => BioTag::I,
            None => BioTag::O,
        })
        .collect()
}

/// `(tp, fp, fn)` of `tag`.
pub fn oracle_tag_counts(gold: &[BioTag], pred: &[BioTag], tag: BioTag) -> [usize; 3] {
    let tp = gold.iter().zip(pred).filter(|(g, p)| **g == tag && **p == tag).count();
    let fp = pred.iter().filter(|p| **p == tag).count() - tp;
    let fn_ = gold.iter().filter(|g| **g == tag).count() - tp;
    [tp, fp, fn_]
}

/// Precision, recall and F1 in percent with zero for empty denominators.
pub fn oracle_prf([tp, fp, fn_]: [usize; 3]) -> [f64; 3] {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 * 100.0 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 * 100.0 / (tp + fn_) as f64 };
    let f = if p + r <= 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    [p, r, f]
}

/// Per-label `(tp, fp, fn)` from a matching given as a pair set.
pub fn oracle_label_counts<L: Label>(matches: &BTreeSet<(usize, usize)>, gold: &[L], pred: &[L]) -> Vec<[usize; 3]> {
    L::ALL
        .iter()
        .map(|&label| {
            let tp = matches.iter().filter(|(g, p)| gold[*g] == label && pred[*p] == label).count();
            let fp = pred.iter().filter(|l| **l == label).count() - tp;
            let fn_ = gold.iter().filter(|l| **l == label).count() - tp;
            [tp, fp, fn_]
        })
        .collect()
}

pub fn random_type(rng: &mut ChaCha8Rng) -> ArgType {
    ArgType::ALL[rng.random_range(0..ArgType::ALL.len())]
}

pub fn random_quality(rng: &mut ChaCha8Rng) -> QualityLabel {
    QualityLabel::ALL[rng.random_range(0..QualityLabel::ALL.len())]
}

/// An essay of `n` filler tokens with the given gold spans and random labels.
pub fn essay_with_spans(rng: &mut ChaCha8Rng, id: &str, n: usize, spans: &[Range<usize>]) -> AnnotatedEssay {
    let text = (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    let spans = spans
        .iter()
        .enumerate()
        .map(|(i, r)| GoldSpan {
            essay_id: id.into(),
            discourse_id: format!("{id}-{i}"),
            index: i,
            start_token: r.start,
            end_token: r.end,
            arg_type: random_type(rng),
            quality: random_quality(rng),
        })
        .collect();
    AnnotatedEssay { essay: Essay::new(id, text), spans }
}

/// Random labelled predictions; about one label in ten is missing.
pub fn random_predictions(rng: &mut ChaCha8Rng, spans: &[Range<usize>]) -> Vec<PredSpan> {
    spans
        .iter()
        .map(|r| PredSpan {
            range: r.clone(),
            arg_type: (rng.random_range(0..10) > 0).then(|| random_type(rng)),
            quality: (rng.random_range(0..10) > 0).then(|| random_quality(rng)),
        })
        .collect()
}

/// The gold SEP rendering of `essay` with up to `max_edits` single-token insertions or
/// deletions, each at least two tokens from any segment boundary.
pub fn perturbed_segmentation(rng: &mut ChaCha8Rng, essay: &AnnotatedEssay, max_edits: usize) -> String {
    let tokens = essay.essay.token_texts();
    let partition = essay.gold_partition();
    let interior: Vec<usize> =
        partition.iter().flat_map(|r| (r.start + 2..r.end.saturating_sub(2)).filter(move |t| t + 2 < r.end)).collect();
    let edits = if interior.is_empty() { 0 } else { rng.random_range(0..=max_edits) };
    // Each chosen token is either deleted or preceded by an inserted word.
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    while chosen.len() < edits.min(interior.len()) {
        chosen.insert(interior[rng.random_range(0..interior.len())]);
    }
    let inserts: Vec<bool> = chosen.iter().map(|_| rng.random_bool(0.5)).collect();
    let mut out: Vec<String> = Vec::new();
    let ends: BTreeSet<usize> = partition.iter().map(|r| r.end).collect();
    for (t, word) in tokens.iter().enumerate() {
        if let Some(k) = chosen.iter().position(|c| *c == t) {
            if inserts[k] {
                out.push(format!("inserted{}", rng.random_range(0..1000)));
                out.push(word.to_string());
            }
        } else {
            out.push(word.to_string());
        }
        if ends.contains(&(t + 1)) {
            out.push("<SEP>".into());
        }
    }
    out.join(" ")
}

pub const SEGMENTATION_QUERY: &str = "Segment the following essay into distinct argument components.";
pub const TYPE_EVALUATOR: &str =
    "You are a strict AI evaluator specializing in detecting the type of argument components in essays.";
pub const QUALITY_EVALUATOR: &str =
    "You are a strict AI evaluator specializing in assessing the quality of argument components in essays.";

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/prompts")
}

/// Every (task, mode, shots) combination, rendered for the Isaac essay.
pub fn all_prompts() -> Vec<(String, Prompt)> {
    let target = isaac_essay();
    let train = CorpusSplit { name: SplitName::Train, essays: synthetic_essays(MAX_SHOTS, 2024, "R") };
    let partition = target.gold_partition();
    let segmented = render_segmented(&target.essay, &partition);
    let mut out = Vec::new();
    for task in TaskKind::ALL {
        for shots in 0..=MAX_SHOTS {
            let set = ShotSet::from_training(Some(&train), task, shots).unwrap();
            let prompt = if task == TaskKind::Segmentation {
                build_segmentation_prompt(&target.essay, &set.segmentation).unwrap()
            } else {
                build_classification_prompt(&segmented, 1, task, &set.classification).unwrap()
            };
            out.push((format!("{task}-few_shot-{shots}.txt"), prompt));
        }
        let input = if task == TaskKind::Segmentation { target.essay.text().to_string() } else { segmented.clone() };
        out.push((format!("{task}-fine_tuned-0.txt"), build_finetuned_prompt(&input, task)));
    }
    out
}
