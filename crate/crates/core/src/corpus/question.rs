//! Rule-based reading of temporal questions.
//!
//! A small pattern table maps relation keywords ("after", "before", "while")
//! to pairwise frames and fixed phrases ("will happen in the future") to
//! warm-up frames. Anything else is left unparsed and excluded from bias
//! statistics.

use serde::{Deserialize, Serialize};

use super::types::{EventMention, QuestionFrame, UnparsedReason};
use crate::relation::RelationLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub keyword: String,
    /// Relation of the anchor to the answers when the keyword precedes it.
    pub anchor_relation: RelationLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRule {
    pub phrase: String,
    pub status: RelationLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuestionParser {
    pub keywords: Vec<KeywordRule>,
    pub statuses: Vec<StatusRule>,
    /// Negation or modality markers that void a pairwise match.
    pub blockers: Vec<String>,
}

impl Default for QuestionParser {
    fn default() -> Self {
        use RelationLabel::*;
        let kw = |k: &str, r| KeywordRule {
            keyword: k.into(),
            anchor_relation: r,
        };
        let st = |p: &str, s| StatusRule {
            phrase: p.into(),
            status: s,
        };
        Self {
            keywords: vec![
                kw("after", Before),
                kw("before", After),
                kw("while", Equal),
                kw("during", Equal),
                kw("when", Equal),
            ],
            statuses: vec![
                st("will happen in the future", Future),
                st("is happening", Happening),
                st("are happening", Happening),
                st("happening now", Happening),
                st("begun but has not finished", Happening),
                st("has happened", Happened),
                st("have happened", Happened),
                st("already happened", Happened),
                st("already finished", Happened),
            ],
            blockers: [
                "not", "never", "n't", "might", "may", "could", "possibly", "probably", "likely",
                "if", "would", "should",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn find_seq(haystack: &[String], needle: &[String], from: usize) -> Option<usize> {
    if needle.is_empty() || haystack.len() < needle.len() {
        return None;
    }
    (from..=haystack.len() - needle.len()).find(|&i| haystack[i..i + needle.len()] == *needle)
}

impl QuestionParser {
    pub fn parse(&self, question: &str, candidates: &[EventMention]) -> QuestionFrame {
        let q_tokens = tokens(question);

        let keyword_hit = self
            .keywords
            .iter()
            .filter_map(|rule| {
                let kt = tokens(&rule.keyword);
                find_seq(&q_tokens, &kt, 0).map(|pos| (pos, pos + kt.len(), rule.anchor_relation))
            })
            .min_by_key(|&(pos, _, _)| pos);

        if let Some((_, after_keyword, anchor_relation)) = keyword_hit {
            if self.is_blocked(question, &q_tokens) {
                return QuestionFrame::Unparsed {
                    reason: UnparsedReason::NegatedOrHypothetical,
                };
            }
            return match find_anchor(&q_tokens, after_keyword, candidates) {
                Some(anchor_index) => QuestionFrame::Pairwise {
                    anchor_index,
                    anchor: candidates[anchor_index].clone(),
                    anchor_relation,
                },
                None => QuestionFrame::Unparsed {
                    reason: UnparsedReason::NoAnchor,
                },
            };
        }

        let normalized = format!(" {} ", q_tokens.join(" "));
        for rule in &self.statuses {
            let phrase = format!(" {} ", tokens(&rule.phrase).join(" "));
            if normalized.contains(&phrase) {
                return QuestionFrame::WarmUp { status: rule.status };
            }
        }

        QuestionFrame::Unparsed {
            reason: UnparsedReason::NoPattern,
        }
    }

    fn is_blocked(&self, question: &str, q_tokens: &[String]) -> bool {
        let lower = question.to_lowercase().replace('\u{2019}', "'");
        self.blockers.iter().any(|b| {
            if b.chars().all(char::is_alphanumeric) {
                q_tokens.iter().any(|t| t == b)
            } else {
                lower.contains(b.as_str())
            }
        })
    }
}

/// Longest candidate surface occurring after the keyword; ties go to the
/// earliest occurrence, then the lowest candidate index.
fn find_anchor(q_tokens: &[String], from: usize, candidates: &[EventMention]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter_map(|(idx, c)| {
            let st = tokens(&c.surface);
            find_seq(q_tokens, &st, from).map(|pos| (idx, c.surface.chars().count(), pos))
        })
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|(idx, _, _)| idx)
}

/// Parse with the default pattern table.
pub fn parse_question(question: &str, candidates: &[EventMention]) -> QuestionFrame {
    QuestionParser::default().parse(question, candidates)
}
