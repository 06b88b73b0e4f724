//! Exact-match precision, recall and F1.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: EvalCounts,
}

impl Prf {
    pub fn from_counts(counts: EvalCounts) -> Self {
        let EvalCounts { tp, fp, fn_ } = counts;
        // An empty denominator means nothing could go wrong: nothing was
        // predicted, or there was nothing to find.
        let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            counts,
        }
    }
}

/// Compare canonical triples by exact match.
pub fn eval_prf<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> Prf {
    let tp = predicted.intersection(gold).count();
    Prf::from_counts(EvalCounts {
        tp,
        fp: predicted.len() - tp,
        fn_: gold.len() - tp,
    })
}
