//! Canonical data model for pairwise and reading-comprehension datasets.

mod load;
mod question;
mod types;

pub use load::{load_dataset, read_dataset, write_dataset, LoadOutcome, RecordError};
pub use question::{parse_question, KeywordRule, QuestionParser, StatusRule};
pub use types::{
    AnnotatedInstance, DepEdge, EventMention, PairInstance, QuestionFrame, RcInstance,
    UnparsedReason,
};

use crate::relation::RelationLabel;

/// One pairwise relation in canonical orientation `(e1, relation, e2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple<'a> {
    pub e1: &'a EventMention,
    pub relation: RelationLabel,
    pub e2: &'a EventMention,
    pub dep_label: Option<&'a str>,
}

/// Result of decomposing an RC instance into pairwise triples.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDerivation<'a> {
    pub triples: Vec<Triple<'a>>,
    /// Set when the frame yields no pairwise relations.
    pub skipped: Option<String>,
}

/// Break a pairwise question into `(anchor, anchor_relation, answer)`
/// triples, one per gold answer.
pub fn derive_pairs(instance: &RcInstance) -> PairDerivation<'_> {
    match &instance.frame {
        QuestionFrame::Pairwise {
            anchor_index,
            anchor_relation,
            ..
        } => {
            let anchor = &instance.candidates[*anchor_index];
            let triples = instance
                .gold_answer_indices
                .iter()
                .map(|&i| Triple {
                    e1: anchor,
                    relation: *anchor_relation,
                    e2: &instance.candidates[i],
                    dep_label: instance.dep_label_between(*anchor_index, i),
                })
                .collect();
            PairDerivation {
                triples,
                skipped: None,
            }
        }
        QuestionFrame::WarmUp { status } => PairDerivation {
            triples: Vec::new(),
            skipped: Some(format!("warm-up question ({status})")),
        },
        QuestionFrame::Unparsed { reason } => PairDerivation {
            triples: Vec::new(),
            skipped: Some(format!("unparsed question ({})", reason.as_str())),
        },
    }
}
