use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{MetricError, Score};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Score")]
pub struct MatchCandidate<S> {
    pub gold_index: usize,
    pub pred_index: usize,
    pub intersection_tokens: usize,
    pub o_gold: S,
    pub o_pred: S,
}

impl<S: Score> MatchCandidate<S> {
    pub fn is_match(&self) -> bool {
        self.o_gold.min(self.o_pred) > S::from_f64(0.5).unwrap()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanMatching {
    /// `(gold_index, pred_index)` in gold order.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_gold: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
    /// Tokens shared by matched pairs.
    pub matched_tokens: usize,
}

fn intersection(a: &Range<usize>, b: &Range<usize>) -> usize {
    a.end.min(b.end).saturating_sub(a.start.max(b.start))
}

fn check_disjoint(side: &'static str, spans: &[Range<usize>]) -> Result<(), MetricError> {
    let mut order: Vec<&Range<usize>> = spans.iter().collect();
    order.sort_by_key(|r| (r.start, r.end));
    for w in order.windows(2) {
        if w[0].end > w[1].start {
            return Err(MetricError::Overlapping { side, first: w[0].clone(), second: w[1].clone() });
        }
    }
    Ok(())
}

/// Every overlapping (gold, pred) pair with its overlap ratios.
pub fn match_candidates<S: Score>(gold: &[Range<usize>], pred: &[Range<usize>]) -> Vec<MatchCandidate<S>> {
    let ratio = |num: usize, den: usize| S::from_usize(num).unwrap() / S::from_usize(den.max(1)).unwrap();
    let mut out = Vec::new();
    for (gi, g) in gold.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            let inter = intersection(g, p);
            if inter > 0 {
                out.push(MatchCandidate {
                    gold_index: gi,
                    pred_index: pi,
                    intersection_tokens: inter,
                    o_gold: ratio(inter, g.len()),
                    o_pred: ratio(inter, p.len()),
                });
            }
        }
    }
    out
}

/// Pairs gold and predicted spans whose intersection exceeds half of each. With
/// disjoint spans on both sides a span can have at most one such partner.
pub fn match_spans(gold: &[Range<usize>], pred: &[Range<usize>]) -> Result<SpanMatching, MetricError> {
    check_disjoint("gold", gold)?;
    check_disjoint("predicted", pred)?;
    let mut gold_partner = vec![None; gold.len()];
    let mut pred_taken = vec![false; pred.len()];
    let mut matched_tokens = 0;
    for (gi, g) in gold.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            let inter = intersection(g, p);
            // Strict majority on both sides, in integers.
            if 2 * inter > g.len() && 2 * inter > p.len() {
                debug_assert!(gold_partner[gi].is_none() && !pred_taken[pi]);
                gold_partner[gi] = Some(pi);
                pred_taken[pi] = true;
                matched_tokens += inter;
            }
        }
    }
    let matched = gold_partner.iter().enumerate().filter_map(|(g, p)| p.map(|p| (g, p))).collect();
    let unmatched_gold = gold_partner.iter().enumerate().filter(|(_, p)| p.is_none()).map(|(g, _)| g).collect();
    let unmatched_pred = pred_taken.iter().enumerate().filter(|(_, t)| !**t).map(|(p, _)| p).collect();
    Ok(SpanMatching { matched, unmatched_gold, unmatched_pred, matched_tokens })
}
