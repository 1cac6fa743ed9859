use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::RelationLabel;

/// A gold or predicted answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    /// Candidate indices of an RC answer set.
    Set(BTreeSet<usize>),
    Relation(RelationLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Exact match of answer sets.
    Em,
    /// Per-question F1 averaged over questions.
    F1,
    /// F1 over all answer decisions pooled across questions.
    BinaryF1,
    MicroF1,
    MacroF1,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Em => "EM",
            Metric::F1 => "F1",
            Metric::BinaryF1 => "binary_F1",
            Metric::MicroF1 => "micro_F1",
            Metric::MacroF1 => "macro_F1",
        }
    }

    pub fn is_set_metric(self) -> bool {
        matches!(self, Metric::Em | Metric::F1 | Metric::BinaryF1)
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn torque_em(pred: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> f64 {
    if pred == gold {
        1.0
    } else {
        0.0
    }
}

/// Set-overlap F1. Two empty sets score 1; exactly one empty set scores 0.
pub fn torque_f1(pred: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let overlap = pred.intersection(gold).count() as f64;
    if overlap == 0.0 {
        return 0.0;
    }
    let p = overlap / pred.len() as f64;
    let r = overlap / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Micro and macro F1 over the four pairwise relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatresScores {
    pub micro_f1: f64,
    pub macro_f1: f64,
}

/// Micro F1 equals accuracy for this single-label task. Macro F1 always
/// divides by four; a class with no gold and no predicted instance adds 0.
pub fn matres_f1(preds: &[RelationLabel], golds: &[RelationLabel]) -> Result<MatresScores> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    Ok(matres_from_pairs(preds.iter().zip(golds)))
}

fn matres_from_pairs<'a>(
    pairs: impl Iterator<Item = (&'a RelationLabel, &'a RelationLabel)>,
) -> MatresScores {
    let classes = RelationLabel::PAIRWISE;
    let mut tp = [0u64; 4];
    let mut fp = [0u64; 4];
    let mut fn_ = [0u64; 4];
    let mut n = 0u64;
    let mut correct = 0u64;
    let idx = |r: &RelationLabel| classes.iter().position(|c| c == r);
    for (p, g) in pairs {
        n += 1;
        if p == g {
            correct += 1;
            if let Some(i) = idx(p) {
                tp[i] += 1;
            }
        } else {
            if let Some(i) = idx(p) {
                fp[i] += 1;
            }
            if let Some(i) = idx(g) {
                fn_[i] += 1;
            }
        }
    }
    let micro_f1 = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    let macro_f1 = (0..4)
        .map(|i| {
            let denom = 2 * tp[i] + fp[i] + fn_[i];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[i] as f64 / denom as f64
            }
        })
        .sum::<f64>()
        / 4.0;
    MatresScores { micro_f1, macro_f1 }
}

fn kind_mismatch() -> Error {
    Error::Parse("prediction and gold answers are of different kinds".into())
}

/// Score aligned `(prediction, gold)` pairs. An empty input scores 0.
pub fn compute<'a>(
    metric: Metric,
    pairs: impl Iterator<Item = (&'a Answer, &'a Answer)>,
) -> Result<f64> {
    if metric.is_set_metric() {
        let mut sets = Vec::new();
        for (p, g) in pairs {
            match (p, g) {
                (Answer::Set(p), Answer::Set(g)) => sets.push((p, g)),
                _ => return Err(kind_mismatch()),
            }
        }
        if sets.is_empty() {
            return Ok(0.0);
        }
        let n = sets.len() as f64;
        return Ok(match metric {
            Metric::Em => sets.iter().map(|(p, g)| torque_em(p, g)).sum::<f64>() / n,
            Metric::F1 => sets.iter().map(|(p, g)| torque_f1(p, g)).sum::<f64>() / n,
            _ => {
                let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
                for (p, g) in &sets {
                    let hit = p.intersection(g).count();
                    tp += hit;
                    fp += p.len() - hit;
                    fn_ += g.len() - hit;
                }
                let denom = 2 * tp + fp + fn_;
                if denom == 0 {
                    1.0
                } else {
                    2.0 * tp as f64 / denom as f64
                }
            }
        });
    }
    let mut rels = Vec::new();
    for (p, g) in pairs {
        match (p, g) {
            (Answer::Relation(p), Answer::Relation(g)) => rels.push((p, g)),
            _ => return Err(kind_mismatch()),
        }
    }
    if rels.is_empty() {
        return Ok(0.0);
    }
    let s = matres_from_pairs(rels.into_iter());
    Ok(if metric == Metric::MicroF1 {
        s.micro_f1
    } else {
        s.macro_f1
    })
}
