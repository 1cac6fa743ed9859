use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::DatasetConfig;
use crate::corpus::{derive_pairs, AnnotatedInstance, EventMention, QuestionFrame};
use crate::error::{Error, Result};
use crate::relation::{BiasType, DatasetKind, RelationLabel};

/// Relative textual order of the two events of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NarrativeOrder {
    P1LtP2,
    P1GtP2,
}

impl NarrativeOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            NarrativeOrder::P1LtP2 => "p1_lt_p2",
            NarrativeOrder::P1GtP2 => "p1_gt_p2",
        }
    }

    /// `None` when both positions coincide.
    pub fn of(p1: usize, p2: usize) -> Option<Self> {
        match p1.cmp(&p2) {
            std::cmp::Ordering::Less => Some(NarrativeOrder::P1LtP2),
            std::cmp::Ordering::Greater => Some(NarrativeOrder::P1GtP2),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// A pattern whose co-occurrence with relations is counted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKey {
    RelPrior { lemma1: String, lemma2: String },
    RelPriorWarm { lemma: String },
    Tense { pos1: String, pos2: String },
    TenseWarm { pos: String },
    Narrative { order: NarrativeOrder },
    Dependency { dep_label: String },
}

impl FeatureKey {
    pub fn bias_type(&self) -> BiasType {
        match self {
            FeatureKey::RelPrior { .. } => BiasType::RelPrior,
            FeatureKey::RelPriorWarm { .. } => BiasType::RelPriorWarm,
            FeatureKey::Tense { .. } => BiasType::Tense,
            FeatureKey::TenseWarm { .. } => BiasType::TenseWarm,
            FeatureKey::Narrative { .. } => BiasType::Narrative,
            FeatureKey::Dependency { .. } => BiasType::Dependency,
        }
    }

    /// Inverse of `Display` for a known bias type.
    pub fn parse(bias_type: BiasType, text: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed {bias_type} key `{text}`"));
        let pair = || text.split_once('|').ok_or_else(bad);
        Ok(match bias_type {
            BiasType::RelPrior => {
                let (a, b) = pair()?;
                FeatureKey::RelPrior {
                    lemma1: a.into(),
                    lemma2: b.into(),
                }
            }
            BiasType::Tense => {
                let (a, b) = pair()?;
                FeatureKey::Tense {
                    pos1: a.into(),
                    pos2: b.into(),
                }
            }
            BiasType::RelPriorWarm => FeatureKey::RelPriorWarm { lemma: text.into() },
            BiasType::TenseWarm => FeatureKey::TenseWarm { pos: text.into() },
            BiasType::Dependency => FeatureKey::Dependency {
                dep_label: text.into(),
            },
            BiasType::Narrative => FeatureKey::Narrative {
                order: match text {
                    "p1_lt_p2" => NarrativeOrder::P1LtP2,
                    "p1_gt_p2" => NarrativeOrder::P1GtP2,
                    _ => return Err(bad()),
                },
            },
        })
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKey::RelPrior { lemma1, lemma2 } => write!(f, "{lemma1}|{lemma2}"),
            FeatureKey::Tense { pos1, pos2 } => write!(f, "{pos1}|{pos2}"),
            FeatureKey::RelPriorWarm { lemma } => f.write_str(lemma),
            FeatureKey::TenseWarm { pos } => f.write_str(pos),
            FeatureKey::Narrative { order } => f.write_str(order.as_str()),
            FeatureKey::Dependency { dep_label } => f.write_str(dep_label),
        }
    }
}

/// A unit of annotation that feature keys are read from.
#[derive(Debug, Clone, Copy)]
pub enum Unit<'a> {
    Pair {
        e1: &'a EventMention,
        e2: &'a EventMention,
        relation: RelationLabel,
        dep_label: Option<&'a str>,
    },
    Status {
        event: &'a EventMention,
        status: RelationLabel,
    },
}

impl Unit<'_> {
    pub fn relation(&self) -> RelationLabel {
        match self {
            Unit::Pair { relation, .. } => *relation,
            Unit::Status { status, .. } => *status,
        }
    }
}

/// Pairs (or warm-up events) of an instance, in a stable order.
pub fn units<'a>(instance: &'a AnnotatedInstance, config: &DatasetConfig) -> Vec<Unit<'a>> {
    match instance {
        AnnotatedInstance::Pair(p) => {
            if config.kind != DatasetKind::Pairwise {
                return Vec::new();
            }
            vec![Unit::Pair {
                e1: &p.e1,
                e2: &p.e2,
                relation: p.gold,
                dep_label: p.dep_label.as_deref(),
            }]
        }
        AnnotatedInstance::Rc(q) => match &q.frame {
            QuestionFrame::WarmUp { status } => q
                .gold_answers()
                .map(|event| Unit::Status {
                    event,
                    status: *status,
                })
                .collect(),
            _ => derive_pairs(q)
                .triples
                .into_iter()
                .map(|t| Unit::Pair {
                    e1: t.e1,
                    e2: t.e2,
                    relation: t.relation,
                    dep_label: t.dep_label,
                })
                .collect(),
        },
    }
}

fn tagged(pos: &str) -> bool {
    pos != "UNK"
}

/// Feature keys of one unit, at most one per bias type.
pub fn unit_features(unit: &Unit<'_>, config: &DatasetConfig) -> Vec<(FeatureKey, RelationLabel)> {
    let mut out = Vec::new();
    match *unit {
        Unit::Pair {
            e1,
            e2,
            relation,
            dep_label,
        } => {
            out.push(FeatureKey::RelPrior {
                lemma1: e1.lemma.clone(),
                lemma2: e2.lemma.clone(),
            });
            if config.narrative_relations.contains(&relation) {
                if let Some(order) = NarrativeOrder::of(e1.token_index, e2.token_index) {
                    out.push(FeatureKey::Narrative { order });
                }
            }
            if tagged(&e1.pos_tag) && tagged(&e2.pos_tag) {
                out.push(FeatureKey::Tense {
                    pos1: e1.pos_tag.clone(),
                    pos2: e2.pos_tag.clone(),
                });
            }
            if let Some(label) = dep_label {
                out.push(FeatureKey::Dependency {
                    dep_label: label.to_string(),
                });
            }
            out.into_iter().map(|k| (k, relation)).collect()
        }
        Unit::Status { event, status } => {
            out.push(FeatureKey::RelPriorWarm {
                lemma: event.lemma.clone(),
            });
            if tagged(&event.pos_tag) {
                out.push(FeatureKey::TenseWarm {
                    pos: event.pos_tag.clone(),
                });
            }
            out.into_iter().map(|k| (k, status)).collect()
        }
    }
}

/// All `(key, relation)` observations of an instance. Questions that parse
/// to neither a pairwise nor a warm-up frame contribute nothing.
pub fn extract_features(
    instance: &AnnotatedInstance,
    config: &DatasetConfig,
) -> Vec<(FeatureKey, RelationLabel)> {
    units(instance, config)
        .iter()
        .flat_map(|u| unit_features(u, config))
        .collect()
}
