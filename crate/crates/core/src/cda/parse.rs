//! Reading model completions back into answers.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::prompts::{TaskItem, Template};
use crate::eval::Answer;
use crate::relation::RelationLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    /// The completion is exactly an answer in the expected format.
    Clean,
    /// An answer was recovered from surrounding text.
    Coerced,
    /// Nothing usable; the default answer is used.
    Failed,
}

/// A model answer for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub template: Template,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<RelationLabel>,
    pub raw_text: String,
    pub parse_status: ParseStatus,
}

impl Prediction {
    pub fn answer(&self) -> Answer {
        match (&self.answer_indices, self.relation) {
            (Some(idx), _) => Answer::Set(idx.iter().copied().collect()),
            (None, Some(r)) => Answer::Relation(r),
            (None, None) => Answer::Set(BTreeSet::new()),
        }
    }
}

static CHOICE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bchoice\s*([ABCD])\b").unwrap());
static LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([ABCD])\b").unwrap());
static MCQA_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(before|after|during|equal|simultaneous|vague|unknown)\b").unwrap());
static T2_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(after|before|equal|vague)\b").unwrap());
static ANSWER_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?i:a(nswer)?)\s*:").unwrap());

fn word_relation(word: &str) -> RelationLabel {
    match word.to_lowercase().as_str() {
        "before" => RelationLabel::Before,
        "after" => RelationLabel::After,
        "during" | "equal" | "simultaneous" => RelationLabel::Equal,
        _ => RelationLabel::Vague,
    }
}

fn letter_relation(letter: &str) -> RelationLabel {
    match letter.to_ascii_uppercase().as_str() {
        "A" => RelationLabel::Before,
        "B" => RelationLabel::After,
        "C" => RelationLabel::Equal,
        _ => RelationLabel::Vague,
    }
}

fn bare(text: &str) -> &str {
    text.trim().trim_end_matches(['.', '!']).trim()
}

fn parse_mcqa(raw: &str) -> (RelationLabel, ParseStatus) {
    let stripped = ANSWER_PREFIX.replace(raw, "");
    if let Some(c) = CHOICE.captures(&stripped) {
        let status = if bare(&stripped) == &c[0] {
            ParseStatus::Clean
        } else {
            ParseStatus::Coerced
        };
        return (letter_relation(&c[1]), status);
    }
    if let Some(c) = LETTER.captures(&stripped) {
        let status = if bare(&stripped) == &c[1] {
            ParseStatus::Clean
        } else {
            ParseStatus::Coerced
        };
        return (letter_relation(&c[1]), status);
    }
    if let Some(m) = MCQA_WORD.find(raw) {
        return (word_relation(m.as_str()), ParseStatus::Coerced);
    }
    (RelationLabel::Vague, ParseStatus::Failed)
}

fn parse_word(raw: &str, re: &Regex) -> (RelationLabel, ParseStatus) {
    match re.find(raw) {
        Some(m) => {
            let status = if bare(raw).eq_ignore_ascii_case(m.as_str()) {
                ParseStatus::Clean
            } else {
                ParseStatus::Coerced
            };
            (word_relation(m.as_str()), status)
        }
        None => (RelationLabel::Vague, ParseStatus::Failed),
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Whole-token, case-insensitive candidate matching.
fn parse_answer_set(raw: &str, events: &[&str]) -> (Vec<usize>, ParseStatus) {
    let stripped = ANSWER_PREFIX.replace(raw, "");
    let toks = tokens(&stripped);
    let mut covered = vec![false; toks.len()];
    let mut found = BTreeSet::new();
    for (idx, surface) in events.iter().enumerate() {
        let st = tokens(surface);
        if st.is_empty() || st.len() > toks.len() {
            continue;
        }
        for start in 0..=toks.len() - st.len() {
            if toks[start..start + st.len()] == st[..] {
                found.insert(idx);
                covered[start..start + st.len()].iter_mut().for_each(|c| *c = true);
            }
        }
    }
    let leftover: Vec<&String> = toks
        .iter()
        .zip(&covered)
        .filter(|(t, c)| !**c && t.as_str() != "and")
        .map(|(t, _)| t)
        .collect();
    if found.is_empty() {
        return if leftover.len() == 1 && leftover[0] == "none" {
            (Vec::new(), ParseStatus::Clean)
        } else if leftover.iter().any(|t| t.as_str() == "none") {
            (Vec::new(), ParseStatus::Coerced)
        } else {
            (Vec::new(), ParseStatus::Failed)
        };
    }
    let status = if leftover.is_empty() {
        ParseStatus::Clean
    } else {
        ParseStatus::Coerced
    };
    (found.into_iter().collect(), status)
}

/// Parse a completion for the given instance and template. Failures fall
/// back to `vague` or the empty answer set and are flagged, never raised.
pub fn parse_llm_answer(raw: &str, id: &str, item: &TaskItem<'_>, template: Template) -> Prediction {
    let mut pred = Prediction {
        id: id.to_string(),
        template,
        answer_indices: None,
        relation: None,
        raw_text: raw.to_string(),
        parse_status: ParseStatus::Failed,
    };
    match (template, item) {
        (Template::TorqueV1 | Template::TorqueV2, TaskItem::Rc { events, .. }) => {
            let (set, status) = parse_answer_set(raw, events);
            pred.answer_indices = Some(set);
            pred.parse_status = status;
        }
        (Template::TorqueV1 | Template::TorqueV2, TaskItem::Pair { .. }) => {
            pred.answer_indices = Some(Vec::new());
        }
        (t, _) => {
            let (r, status) = match t {
                Template::MatresMcqa => parse_mcqa(raw),
                Template::MatresT2 => parse_word(raw, &T2_WORD),
                _ => parse_word(raw, &MCQA_WORD),
            };
            pred.relation = Some(r);
            pred.parse_status = status;
        }
    }
    pred
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelationLabel::*;

    fn pair() -> TaskItem<'static> {
        TaskItem::Pair {
            context: "c",
            e1: "a",
            e2: "b",
        }
    }

    fn mcqa(raw: &str) -> (Option<RelationLabel>, ParseStatus) {
        let p = parse_llm_answer(raw, "x", &pair(), Template::MatresMcqa);
        (p.relation, p.parse_status)
    }

    #[test]
    fn mcqa_letters() {
        assert_eq!(mcqa("Choice B"), (Some(After), ParseStatus::Clean));
        assert_eq!(mcqa(" B"), (Some(After), ParseStatus::Clean));
        assert_eq!(mcqa("A: Choice B"), (Some(After), ParseStatus::Clean));
        assert_eq!(mcqa("I pick choice c, since"), (Some(Equal), ParseStatus::Coerced));
        assert_eq!(mcqa("C."), (Some(Equal), ParseStatus::Clean));
        assert_eq!(mcqa("The answer is D because"), (Some(Vague), ParseStatus::Coerced));
        assert_eq!(mcqa("it happens during"), (Some(Equal), ParseStatus::Coerced));
        assert_eq!(mcqa("I am not sure."), (Some(Vague), ParseStatus::Failed));
    }

    #[test]
    fn single_word_templates() {
        let p = parse_llm_answer("BEFORE", "x", &pair(), Template::MatresT2);
        assert_eq!((p.relation, p.parse_status), (Some(Before), ParseStatus::Clean));
        let p = parse_llm_answer("It is after, not before", "x", &pair(), Template::MatresT2);
        assert_eq!((p.relation, p.parse_status), (Some(After), ParseStatus::Coerced));
        let p = parse_llm_answer("before", "x", &pair(), Template::MatresT3);
        assert_eq!((p.relation, p.parse_status), (Some(Before), ParseStatus::Clean));
        let p = parse_llm_answer("no idea", "x", &pair(), Template::MatresT3);
        assert_eq!((p.relation, p.parse_status), (Some(Vague), ParseStatus::Failed));
    }

    #[test]
    fn answer_sets() {
        let item = TaskItem::Rc {
            context: "c",
            question: "q",
            events: vec!["called", "vote", "take off", "called"],
        };
        let p = parse_llm_answer(" Called, VOTE", "x", &item, Template::TorqueV1);
        assert_eq!(p.answer_indices, Some(vec![0, 1, 3]));
        assert_eq!(p.parse_status, ParseStatus::Clean);
        let p = parse_llm_answer("none", "x", &item, Template::TorqueV1);
        assert_eq!((p.answer_indices, p.parse_status), (Some(vec![]), ParseStatus::Clean));
        let p = parse_llm_answer("They take off and revoted", "x", &item, Template::TorqueV2);
        assert_eq!((p.answer_indices, p.parse_status), (Some(vec![2]), ParseStatus::Coerced));
        let p = parse_llm_answer("nothing here", "x", &item, Template::TorqueV1);
        assert_eq!((p.answer_indices, p.parse_status), (Some(vec![]), ParseStatus::Failed));
    }
}
