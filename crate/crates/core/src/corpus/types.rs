use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::relation::RelationLabel;

/// An annotated event trigger inside a context or passage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMention {
    pub surface: String,
    pub lemma: String,
    /// Token position in the context's token sequence.
    pub token_index: usize,
    /// Byte offsets into the context.
    pub char_start: usize,
    pub char_end: usize,
    /// Penn Treebank tag, or `UNK`.
    pub pos_tag: String,
    pub sentence_index: usize,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl EventMention {
    /// Minimal constructor; the span is left for the caller to fill.
    pub fn new(surface: &str, lemma: &str, token_index: usize, pos_tag: &str) -> Self {
        Self {
            surface: surface.to_string(),
            lemma: lemma.to_string(),
            token_index,
            char_start: 0,
            char_end: surface.len(),
            pos_tag: pos_tag.to_string(),
            sentence_index: 0,
            extra: Map::new(),
        }
    }

    pub fn with_span(mut self, start: usize, end: usize) -> Self {
        self.char_start = start;
        self.char_end = end;
        self
    }

    pub fn span(&self) -> (usize, usize) {
        (self.char_start, self.char_end)
    }
}

/// One event pair with its gold relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInstance {
    pub id: String,
    pub context: String,
    pub e1: EventMention,
    pub e2: EventMention,
    pub gold: RelationLabel,
    /// Direct dependency label between the triggers; absent when they share
    /// no edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dep_label: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// A direct dependency edge between two candidates of an RC record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepEdge {
    pub head: usize,
    pub dependent: usize,
    pub label: String,
}

/// A reading-comprehension question over a passage's annotated events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcInstance {
    pub id: String,
    pub passage: String,
    pub question: String,
    pub candidates: Vec<EventMention>,
    pub gold_answer_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dependencies: Vec<DepEdge>,
    #[serde(skip)]
    pub frame: QuestionFrame,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl RcInstance {
    pub fn gold_answers(&self) -> impl Iterator<Item = &EventMention> + '_ {
        self.gold_answer_indices.iter().map(|&i| &self.candidates[i])
    }

    /// Label of a direct edge between two candidates, in either direction.
    pub fn dep_label_between(&self, a: usize, b: usize) -> Option<&str> {
        self.dependencies
            .iter()
            .find(|d| (d.head == a && d.dependent == b) || (d.head == b && d.dependent == a))
            .map(|d| d.label.as_str())
    }
}

/// Why a question could not be turned into a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnparsedReason {
    NotParsed,
    NoPattern,
    NoAnchor,
    NegatedOrHypothetical,
}

impl UnparsedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UnparsedReason::NotParsed => "not_parsed",
            UnparsedReason::NoPattern => "no_pattern",
            UnparsedReason::NoAnchor => "no_anchor",
            UnparsedReason::NegatedOrHypothetical => "negated_or_hypothetical",
        }
    }
}

/// The temporal reading of a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "snake_case")]
pub enum QuestionFrame {
    /// The anchor stands in `anchor_relation` to every answer: "what
    /// happened after X" gives `(X, before, answer)`.
    Pairwise {
        anchor_index: usize,
        anchor: EventMention,
        anchor_relation: RelationLabel,
    },
    WarmUp { status: RelationLabel },
    Unparsed { reason: UnparsedReason },
}

impl Default for QuestionFrame {
    fn default() -> Self {
        QuestionFrame::Unparsed {
            reason: UnparsedReason::NotParsed,
        }
    }
}

/// A canonical record of either dataset style.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AnnotatedInstance {
    Pair(PairInstance),
    Rc(RcInstance),
}

impl AnnotatedInstance {
    pub fn id(&self) -> &str {
        match self {
            AnnotatedInstance::Pair(p) => &p.id,
            AnnotatedInstance::Rc(q) => &q.id,
        }
    }

    pub fn as_pair(&self) -> Option<&PairInstance> {
        match self {
            AnnotatedInstance::Pair(p) => Some(p),
            AnnotatedInstance::Rc(_) => None,
        }
    }

    pub fn as_rc(&self) -> Option<&RcInstance> {
        match self {
            AnnotatedInstance::Rc(q) => Some(q),
            AnnotatedInstance::Pair(_) => None,
        }
    }
}

impl From<PairInstance> for AnnotatedInstance {
    fn from(p: PairInstance) -> Self {
        AnnotatedInstance::Pair(p)
    }
}

impl From<RcInstance> for AnnotatedInstance {
    fn from(q: RcInstance) -> Self {
        AnnotatedInstance::Rc(q)
    }
}
