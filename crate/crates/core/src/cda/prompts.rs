//! Task templates and generation prompts. Every string here is checked
//! byte for byte against the golden files under `tests/golden`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedInstance, PairInstance, RcInstance};
use crate::error::{Error, Result};
use crate::eval::Answer;
use crate::relation::{DatasetKind, RelationLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    TorqueV1,
    TorqueV2,
    /// Four-way multiple choice.
    MatresMcqa,
    MatresT2,
    MatresT3,
}

impl Template {
    pub const ALL: [Template; 5] = [
        Template::TorqueV1,
        Template::TorqueV2,
        Template::MatresMcqa,
        Template::MatresT2,
        Template::MatresT3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Template::TorqueV1 => "torque_v1",
            Template::TorqueV2 => "torque_v2",
            Template::MatresMcqa => "matres_mcqa",
            Template::MatresT2 => "matres_t2",
            Template::MatresT3 => "matres_t3",
        }
    }

    pub fn kind(self) -> DatasetKind {
        match self {
            Template::TorqueV1 | Template::TorqueV2 => DatasetKind::ReadingComprehension,
            _ => DatasetKind::Pairwise,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

/// The text fields a template needs.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskItem<'a> {
    Pair {
        context: &'a str,
        e1: &'a str,
        e2: &'a str,
    },
    Rc {
        context: &'a str,
        question: &'a str,
        /// Surfaces of every annotated event, in candidate order.
        events: Vec<&'a str>,
    },
}

impl<'a> TaskItem<'a> {
    pub fn from_pair(p: &'a PairInstance) -> Self {
        TaskItem::Pair {
            context: &p.context,
            e1: &p.e1.surface,
            e2: &p.e2.surface,
        }
    }

    pub fn from_rc(q: &'a RcInstance) -> Self {
        TaskItem::Rc {
            context: &q.passage,
            question: &q.question,
            events: q.candidates.iter().map(|c| c.surface.as_str()).collect(),
        }
    }

    pub fn from_instance(instance: &'a AnnotatedInstance) -> Self {
        match instance {
            AnnotatedInstance::Pair(p) => Self::from_pair(p),
            AnnotatedInstance::Rc(q) => Self::from_rc(q),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            TaskItem::Pair { .. } => "pairwise",
            TaskItem::Rc { .. } => "reading-comprehension",
        }
    }
}

fn mismatch(template: Template, item: &TaskItem<'_>) -> Error {
    Error::TemplateMismatch {
        template: template.as_str(),
        kind: item.kind_name(),
    }
}

/// Zero-shot rendering of a task instance.
pub fn render(template: Template, item: &TaskItem<'_>) -> Result<String> {
    match (template, item) {
        (Template::TorqueV1, TaskItem::Rc { context, question, events }) => Ok(format!(
            "Q: {question}, select none or several from {} \n {context} \n A:",
            events.join(", ")
        )),
        (Template::TorqueV2, TaskItem::Rc { context, question, events }) => Ok(format!(
            "Given the context {context}, {question}, select none or several from {} \n A:",
            events.join(", ")
        )),
        (Template::MatresMcqa, TaskItem::Pair { context, e1, e2 }) => Ok(format!(
            "Given the context:\n{context}\n\nQ: What's the temporal relation between the event \"{e1}\" and \"{e2}\"? \n Choice A: {e1} happens before {e2}. \n Choice B: {e1} happens after {e2}. \n Choice C: {e1} happens during {e2}. \n Choice D: unknown. \nAnswer only with A, B, C, or D. \n\nA: Choice"
        )),
        (Template::MatresT2, TaskItem::Pair { context, e1, e2 }) => Ok(format!(
            "Determine the temporal order from \"{e1}\" to \"{e2}\" in the following sentence: \"{context}\". Only answer one word from AFTER, BEFORE, EQUAL, VAGUE. Answer:"
        )),
        (Template::MatresT3, TaskItem::Pair { context, e1, e2 }) => Ok(format!(
            "Given the document {context} and a list of temporal relations [before, after, vague, equal] and event triggers {e1} and {e2}. what is the temporal relation between {e1} and {e2}? Answer vague if unsure. Keep the answer short and concise."
        )),
        (t, item) => Err(mismatch(t, item)),
    }
}

pub fn mcqa_letter(relation: RelationLabel) -> Result<char> {
    match relation {
        RelationLabel::Before => Ok('A'),
        RelationLabel::After => Ok('B'),
        RelationLabel::Equal => Ok('C'),
        RelationLabel::Vague => Ok('D'),
        other => Err(Error::UnsupportedRelation {
            relation: other,
            context: "the multiple-choice template",
        }),
    }
}

/// The gold answer as it is appended to a rendered demonstration.
pub fn answer_text(template: Template, item: &TaskItem<'_>, answer: &Answer) -> Result<String> {
    match (template, item, answer) {
        (Template::TorqueV1 | Template::TorqueV2, TaskItem::Rc { events, .. }, Answer::Set(set)) => {
            if set.is_empty() {
                return Ok("none".to_string());
            }
            let names: Vec<&str> = set
                .iter()
                .map(|&i| {
                    events.get(i).copied().ok_or_else(|| {
                        Error::Config(format!("answer index {i} is out of range for {} events", events.len()))
                    })
                })
                .collect::<Result<_>>()?;
            Ok(names.join(", "))
        }
        (Template::MatresMcqa, TaskItem::Pair { .. }, Answer::Relation(r)) => Ok(mcqa_letter(*r)?.to_string()),
        (Template::MatresT2, TaskItem::Pair { .. }, Answer::Relation(r)) if r.is_pairwise() => {
            Ok(r.as_str().to_uppercase())
        }
        (Template::MatresT3, TaskItem::Pair { .. }, Answer::Relation(r)) if r.is_pairwise() => {
            Ok(r.as_str().to_string())
        }
        (t, item, _) => Err(mismatch(t, item)),
    }
}

/// A rendered demonstration: the template followed by its answer.
pub fn render_answered(template: Template, item: &TaskItem<'_>, answer: &Answer) -> Result<String> {
    Ok(format!("{} {}", render(template, item)?, answer_text(template, item, answer)?))
}

/// Phrase for an ordered relation inside generation prompts.
pub fn relation_phrase(relation: RelationLabel) -> Option<&'static str> {
    match relation {
        RelationLabel::Before => Some("before"),
        RelationLabel::After => Some("after"),
        RelationLabel::Equal => Some("in the same time as"),
        _ => None,
    }
}

/// Augmentation prompt for a pretrained generator.
pub fn plm_aug_prompt(e1: &str, e2: &str, relation: RelationLabel) -> Result<String> {
    let phrase = relation_phrase(relation).ok_or(Error::UnsupportedRelation {
        relation,
        context: "the story augmentation prompt",
    })?;
    Ok(format!("Write a story where {e1} happens {phrase} {e2}:"))
}

pub fn status_phrase(status: RelationLabel) -> Option<&'static str> {
    match status {
        RelationLabel::Happened => Some("have happened"),
        RelationLabel::Happening => Some("are happening"),
        RelationLabel::Future => Some("will happen"),
        _ => None,
    }
}

/// Augmentation prompt for warm-up questions about two events.
pub fn warmup_aug_prompt(e1: &str, e2: &str, status: RelationLabel) -> Result<String> {
    let phrase = status_phrase(status).ok_or(Error::UnsupportedRelation {
        relation: status,
        context: "the warm-up augmentation prompt",
    })?;
    Ok(format!("Write a story where {e1} and {e2} {phrase}"))
}

/// Demonstration prompt for the pairwise in-context path.
pub fn llm_demo_prompt(e1: &str, e2: &str, relation: RelationLabel) -> Result<String> {
    match relation {
        RelationLabel::Vague => Ok(format!(
            "Generate a paragraph where the temporal relation of {e1} and {e2} cannot be determined based on the context:"
        )),
        r => match relation_phrase(r) {
            Some(phrase) => Ok(format!("Generate a paragraph where event {e1} happens {phrase} {e2}:")),
            None => Err(Error::UnsupportedRelation {
                relation: r,
                context: "the paragraph generation prompt",
            }),
        },
    }
}

/// Question and answer events of an augmented reading-comprehension example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorqueQa {
    pub question: String,
    pub answers: Vec<String>,
}

/// `What happened {r} {e2}?` answered by `e1`. Equal reads as "while".
pub fn derive_torque_qa(e1: &str, e2: &str, relation: RelationLabel) -> Result<TorqueQa> {
    let word = match relation {
        RelationLabel::Before => "before",
        RelationLabel::After => "after",
        RelationLabel::Equal => "while",
        other => {
            return Err(Error::UnsupportedRelation {
                relation: other,
                context: "derived questions",
            })
        }
    };
    Ok(TorqueQa {
        question: format!("What happened {word} {e2}?"),
        answers: vec![e1.to_string()],
    })
}

pub fn warmup_question(status: RelationLabel) -> Result<String> {
    match status {
        RelationLabel::Happened => Ok("What have happened?".into()),
        RelationLabel::Future => Ok("What will happen in the future?".into()),
        RelationLabel::Happening => Ok("What is happening?".into()),
        other => Err(Error::UnsupportedRelation {
            relation: other,
            context: "warm-up questions",
        }),
    }
}
