//! Evaluation: BIO segmentation scores, span matching, per-label precision/recall/F1
//! with the Echec pseudo-class, confusion matrices, overlap statistics, and aggregation
//! over repeated runs. Counting is exact (integers); only the final ratios use the
//! score scalar `S`.

mod aggregate;
mod bio;
mod labels;
mod matching;
mod report;

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use aggregate::{aggregate_runs, AggregateMetric, AggregateReport, MetricKey, MetricValue};
pub use bio::{bio_f1, bio_tags, BioCounts, BioReport, BioTag};
pub use labels::{
    confusion_matrix, label_scores, macro_average, ConfusionMatrix, LabelReport, LabelRow, LabelTally, ECHEC,
};
pub use matching::{match_candidates, match_spans, MatchCandidate, SpanMatching};
pub use report::{
    DiscardCounts, EvalAccumulator, EvalReport, OverlapCounts, PredSpan, SegmentationReport, SegmentationSource,
};

/// Floating-point type scores are reported in.
pub trait Score:
    Float + FromPrimitive + Default + Debug + Display + Send + Sync + Serialize + DeserializeOwned + 'static
{
}

impl<T> Score for T where
    T: Float + FromPrimitive + Default + Debug + Display + Send + Sync + Serialize + DeserializeOwned + 'static
{
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("spans do not partition {tokens} tokens: {detail}")]
    NotPartition { tokens: usize, detail: String },
    #[error("tag sequences differ in length: {gold} vs {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("{side} spans {first:?} and {second:?} overlap")]
    Overlapping { side: &'static str, first: std::ops::Range<usize>, second: std::ops::Range<usize> },
    #[error("{spans} spans but {labels} labels")]
    LabelCount { spans: usize, labels: usize },
    #[error("cannot aggregate: {0}")]
    Heterogeneous(String),
    #[error("nothing to aggregate")]
    Empty,
}

/// `100 * num / den`, or zero for an empty denominator.
pub fn percent<S: Score>(num: usize, den: usize) -> S {
    if den == 0 {
        return S::zero();
    }
    S::from_usize(num).unwrap() * S::from_u32(100).unwrap() / S::from_usize(den).unwrap()
}

/// Harmonic mean of precision and recall, zero when both are zero.
pub fn f1<S: Score>(precision: S, recall: S) -> S {
    let sum = precision + recall;
    if sum <= S::zero() {
        S::zero()
    } else {
        (S::one() + S::one()) * precision * recall / sum
    }
}

/// Formats `value` with `decimals` places, rounding half away from zero on its shortest
/// decimal representation (so 51.445 prints as 51.45, where binary rounding gives 51.44).
pub fn round_half_up<S: Score>(value: S, decimals: usize) -> String {
    if value.is_nan() {
        return "NaN".into();
    }
    if value.is_infinite() {
        return if value > S::zero() { "inf".into() } else { "-inf".into() };
    }
    let repr = value.to_string();
    let (negative, digits) = match repr.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, repr.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let mut frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    frac.resize(frac.len().max(decimals + 1), 0);
    let round_up = frac[decimals] >= 5;
    let mut kept: Vec<u8> = int_part.bytes().map(|b| b - b'0').chain(frac[..decimals].iter().copied()).collect();
    if round_up {
        let mut i = kept.len();
        loop {
            if i == 0 {
                kept.insert(0, 1);
                break;
            }
            i -= 1;
            if kept[i] == 9 {
                kept[i] = 0;
            } else {
                kept[i] += 1;
                break;
            }
        }
    }
    let split = kept.len() - decimals;
    let int_digits: String = kept[..split].iter().map(|d| char::from(b'0' + d)).collect();
    let frac_digits: String = kept[split..].iter().map(|d| char::from(b'0' + d)).collect();
    let is_zero = kept.iter().all(|&d| d == 0);
    let sign = if negative && !is_zero { "-" } else { "" };
    if decimals == 0 {
        format!("{sign}{int_digits}")
    } else {
        format!("{sign}{int_digits}.{frac_digits}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(51.44875f64, 2), "51.45");
        assert_eq!(round_half_up(51.445f64, 2), "51.45");
        assert_eq!(round_half_up(58.79857142857143f64, 2), "58.80");
        assert_eq!(round_half_up(99.995f64, 2), "100.00");
        assert_eq!(round_half_up(0.0f64, 2), "0.00");
        assert_eq!(round_half_up(-0.001f64, 2), "0.00");
        assert_eq!(round_half_up(-1.005f64, 2), "-1.01");
        assert_eq!(round_half_up(7f32, 1), "7.0");
        assert_eq!(round_half_up(2.5f64, 0), "3");
    }

    #[test]
    fn ratio_helpers() {
        assert_eq!(percent::<f64>(1, 4), 25.0);
        assert_eq!(percent::<f32>(3, 0), 0.0);
        assert_eq!(f1::<f64>(0.0, 0.0), 0.0);
        assert_eq!(f1::<f64>(50.0, 100.0), 2.0 * 50.0 * 100.0 / 150.0);
    }
}
