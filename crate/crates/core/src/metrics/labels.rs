use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use super::{f1, percent, MetricError, Score, SpanMatching};
use crate::corpus::Label;

/// Confusion column for a gold span no prediction matched.
pub const ECHEC: &str = "Echec";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct LabelRow<S> {
    pub label: String,
    pub precision: S,
    pub recall: S,
    pub f1: S,
    /// Gold spans carrying this label.
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct LabelReport<S> {
    pub family: String,
    pub rows: Vec<LabelRow<S>>,
    /// Unmatched gold plus unmatched predicted spans: the occurrences of Echec.
    pub echec_events: usize,
    /// Whether the macro average counts Echec as a class with F1 = 0.
    pub echec_in_macro: bool,
    pub macro_f1: S,
}

impl<S: Score> LabelReport<S> {
    pub fn row(&self, label: &str) -> Option<&LabelRow<S>> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Mean of per-label F1 scores, with an extra zero for Echec when `include_echec`.
pub fn macro_average<S: Score>(f1s: &[S], include_echec: bool) -> S {
    let n = f1s.len() + usize::from(include_echec);
    if n == 0 {
        return S::zero();
    }
    f1s.iter().fold(S::zero(), |acc, &x| acc + x) / S::from_usize(n).unwrap()
}

/// Rows are gold labels plus a zero Echec row; columns are predicted labels plus Echec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `(labels.len() + 1)` square; the last row and column are Echec.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn get(&self, gold: &str, pred: &str) -> Option<usize> {
        let index = |name: &str| {
            if name == ECHEC {
                Some(self.labels.len())
            } else {
                self.labels.iter().position(|l| l == name)
            }
        };
        Some(self.counts[index(gold)?][index(pred)?])
    }

    pub fn row_sum(&self, gold: &str) -> usize {
        self.labels.iter().position(|l| l == gold).map_or(0, |i| self.counts[i].iter().sum())
    }
}

/// TP/FP/FN and confusion counts for one label vocabulary, summable across essays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTally<L> {
    tp: Vec<usize>,
    fp: Vec<usize>,
    fn_: Vec<usize>,
    support: Vec<usize>,
    confusion: Vec<Vec<usize>>,
    unmatched: usize,
    #[serde(skip)]
    _label: PhantomData<L>,
}

impl<L: Label> Default for LabelTally<L> {
    fn default() -> Self {
        let n = L::ALL.len();
        Self {
            tp: vec![0; n],
            fp: vec![0; n],
            fn_: vec![0; n],
            support: vec![0; n],
            confusion: vec![vec![0; n + 1]; n + 1],
            unmatched: 0,
            _label: PhantomData,
        }
    }
}

impl<L: Label> LabelTally<L> {
    /// Counts one essay. A matched pair with equal labels is a TP; with different labels
    /// it is an FN for the gold label and an FP for the predicted one. Unmatched
    /// predictions are FPs of their label; unmatched gold spans are FNs and land in the
    /// Echec column.
    pub fn add(&mut self, matching: &SpanMatching, gold: &[L], pred: &[L]) -> Result<(), MetricError> {
        let max_gold = matching.matched.iter().map(|m| m.0).chain(matching.unmatched_gold.iter().copied()).max();
        let max_pred = matching.matched.iter().map(|m| m.1).chain(matching.unmatched_pred.iter().copied()).max();
        if max_gold.is_some_and(|g| g >= gold.len()) {
            return Err(MetricError::LabelCount { spans: max_gold.unwrap() + 1, labels: gold.len() });
        }
        if max_pred.is_some_and(|p| p >= pred.len()) {
            return Err(MetricError::LabelCount { spans: max_pred.unwrap() + 1, labels: pred.len() });
        }
        let echec = L::ALL.len();
        for &label in gold {
            self.support[label.ordinal()] += 1;
        }
        for &(g, p) in &matching.matched {
            let (g, p) = (gold[g].ordinal(), pred[p].ordinal());
            if g == p {
                self.tp[g] += 1;
            } else {
                self.fn_[g] += 1;
                self.fp[p] += 1;
            }
            self.confusion[g][p] += 1;
        }
        for &p in &matching.unmatched_pred {
            self.fp[pred[p].ordinal()] += 1;
        }
        self.unmatched += matching.unmatched_pred.len() + matching.unmatched_gold.len();
        for &g in &matching.unmatched_gold {
            let g = gold[g].ordinal();
            self.fn_[g] += 1;
            self.confusion[g][echec] += 1;
        }
        Ok(())
    }

    /// Counts gold spans of an essay with no usable prediction at all.
    pub fn add_unmatched_gold(&mut self, gold: &[L]) {
        let matching = SpanMatching { unmatched_gold: (0..gold.len()).collect(), ..SpanMatching::default() };
        self.add(&matching, gold, &[]).expect("indices are in range");
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in [
            (&mut self.tp, &other.tp),
            (&mut self.fp, &other.fp),
            (&mut self.fn_, &other.fn_),
            (&mut self.support, &other.support),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (row, other_row) in self.confusion.iter_mut().zip(&other.confusion) {
            row.iter_mut().zip(other_row).for_each(|(x, y)| *x += y);
        }
        self.unmatched += other.unmatched;
    }

    /// Per-label scores. With `echec_allowed`, Echec joins the macro average at F1 = 0
    /// as soon as it occurs, i.e. some span went unmatched.
    pub fn report<S: Score>(&self, echec_allowed: bool) -> LabelReport<S> {
        let echec_in_macro = echec_allowed && self.unmatched > 0;
        let rows: Vec<LabelRow<S>> = L::ALL
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let precision = percent(self.tp[i], self.tp[i] + self.fp[i]);
                let recall = percent(self.tp[i], self.tp[i] + self.fn_[i]);
                LabelRow {
                    label: label.name().to_string(),
                    precision,
                    recall,
                    f1: f1(precision, recall),
                    support: self.support[i],
                    tp: self.tp[i],
                    fp: self.fp[i],
                    fn_: self.fn_[i],
                }
            })
            .collect();
        let f1s: Vec<S> = rows.iter().map(|r| r.f1).collect();
        LabelReport {
            family: L::FAMILY.to_string(),
            macro_f1: macro_average(&f1s, echec_in_macro),
            rows,
            echec_events: self.unmatched,
            echec_in_macro,
        }
    }

    pub fn confusion(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            labels: L::ALL.iter().map(|l| l.name().to_string()).collect(),
            counts: self.confusion.clone(),
        }
    }
}

/// Per-label scores for one matched essay (or any single instance).
pub fn label_scores<S: Score, L: Label>(
    matching: &SpanMatching,
    gold: &[L],
    pred: &[L],
    echec_allowed: bool,
) -> Result<LabelReport<S>, MetricError> {
    let mut tally = LabelTally::<L>::default();
    tally.add(matching, gold, pred)?;
    Ok(tally.report(echec_allowed))
}

pub fn confusion_matrix<L: Label>(
    matching: &SpanMatching,
    gold: &[L],
    pred: &[L],
) -> Result<ConfusionMatrix, MetricError> {
    let mut tally = LabelTally::<L>::default();
    tally.add(matching, gold, pred)?;
    Ok(tally.confusion())
}
