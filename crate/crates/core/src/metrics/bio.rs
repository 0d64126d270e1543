use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{f1, percent, MetricError, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    /// Outside any argument. Gold partitions never produce it; a discarded essay's
    /// prediction is all `O`.
    O,
}

/// Tags `token_count` tokens from spans that must partition them.
pub fn bio_tags(token_count: usize, spans: &[Range<usize>]) -> Result<Vec<BioTag>, MetricError> {
    let mut expected = 0;
    for s in spans {
        if s.start != expected || s.end <= s.start {
            return Err(MetricError::NotPartition {
                tokens: token_count,
                detail: format!("span {s:?} where a span starting at {expected} was expected"),
            });
        }
        expected = s.end;
    }
    if expected != token_count {
        return Err(MetricError::NotPartition { tokens: token_count, detail: format!("spans end at {expected}") });
    }
    let mut tags = vec![BioTag::I; token_count];
    for s in spans {
        tags[s.start] = BioTag::B;
    }
    Ok(tags)
}

/// Token-level confusion counts for the B and I tags, summable across essays.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BioCounts {
    /// `[tp, fp, fn]` for B.
    pub b: [usize; 3],
    /// `[tp, fp, fn]` for I.
    pub i: [usize; 3],
}

impl BioCounts {
    pub fn add(&mut self, gold: &[BioTag], pred: &[BioTag]) -> Result<(), MetricError> {
        if gold.len() != pred.len() {
            return Err(MetricError::LengthMismatch { gold: gold.len(), pred: pred.len() });
        }
        for (&g, &p) in gold.iter().zip(pred) {
            for (tag, counts) in [(BioTag::B, &mut self.b), (BioTag::I, &mut self.i)] {
                match (g == tag, p == tag) {
                    (true, true) => counts[0] += 1,
                    (false, true) => counts[1] += 1,
                    (true, false) => counts[2] += 1,
                    (false, false) => {}
                }
            }
        }
        Ok(())
    }

    pub fn report<S: Score>(&self) -> BioReport<S> {
        let score = |[tp, fp, fn_]: [usize; 3]| {
            let p = percent::<S>(tp, tp + fp);
            let r = percent::<S>(tp, tp + fn_);
            [p, r, f1(p, r)]
        };
        let b = score(self.b);
        let i = score(self.i);
        BioReport {
            b_precision: b[0],
            b_recall: b[1],
            b_f1: b[2],
            i_precision: i[0],
            i_recall: i[1],
            i_f1: i[2],
            macro_f1: (b[2] + i[2]) / (S::one() + S::one()),
            counts: *self,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct BioReport<S> {
    pub b_precision: S,
    pub b_recall: S,
    pub b_f1: S,
    pub i_precision: S,
    pub i_recall: S,
    pub i_f1: S,
    /// Mean of the B and I F1 scores.
    pub macro_f1: S,
    pub counts: BioCounts,
}

pub fn bio_f1<S: Score>(gold: &[BioTag], pred: &[BioTag]) -> Result<BioReport<S>, MetricError> {
    let mut counts = BioCounts::default();
    counts.add(gold, pred)?;
    Ok(counts.report())
}
