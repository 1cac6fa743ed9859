//! Relation labels, bias types and dataset kinds shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A temporal relation between two events, or the status of a single event
/// for warm-up questions.
///
/// The declaration order is the fixed relation order used for demonstrations
/// and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationLabel {
    Before,
    After,
    Equal,
    Vague,
    Happened,
    Happening,
    Future,
}

impl RelationLabel {
    pub const PAIRWISE: [RelationLabel; 4] = [
        RelationLabel::Before,
        RelationLabel::After,
        RelationLabel::Equal,
        RelationLabel::Vague,
    ];

    /// Relations with a definite order; the only ones narrative bias studies.
    pub const ORDERED: [RelationLabel; 3] = [
        RelationLabel::Before,
        RelationLabel::After,
        RelationLabel::Equal,
    ];

    pub const STATUSES: [RelationLabel; 3] = [
        RelationLabel::Happened,
        RelationLabel::Happening,
        RelationLabel::Future,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Before => "before",
            RelationLabel::After => "after",
            RelationLabel::Equal => "equal",
            RelationLabel::Vague => "vague",
            RelationLabel::Happened => "happened",
            RelationLabel::Happening => "happening",
            RelationLabel::Future => "future",
        }
    }

    pub fn is_status(self) -> bool {
        matches!(
            self,
            RelationLabel::Happened | RelationLabel::Happening | RelationLabel::Future
        )
    }

    pub fn is_pairwise(self) -> bool {
        !self.is_status()
    }

    /// The relation seen from the other event: `a before b` is `b after a`.
    pub fn inverse(self) -> RelationLabel {
        match self {
            RelationLabel::Before => RelationLabel::After,
            RelationLabel::After => RelationLabel::Before,
            other => other,
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "before" => RelationLabel::Before,
            "after" => RelationLabel::After,
            "equal" => RelationLabel::Equal,
            "vague" => RelationLabel::Vague,
            "happened" => RelationLabel::Happened,
            "happening" => RelationLabel::Happening,
            "future" => RelationLabel::Future,
            other => return Err(Error::UnknownLabel(other.to_string())),
        })
    }
}

/// The four bias families, split into relation and warm-up variants where
/// the reading-comprehension data has both.
///
/// Declaration order matches the column order of the subset reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasType {
    RelPrior,
    #[serde(rename = "rel_prior_warmup")]
    RelPriorWarm,
    Narrative,
    Tense,
    #[serde(rename = "tense_warmup")]
    TenseWarm,
    Dependency,
}

impl BiasType {
    pub const ALL: [BiasType; 6] = [
        BiasType::RelPrior,
        BiasType::RelPriorWarm,
        BiasType::Narrative,
        BiasType::Tense,
        BiasType::TenseWarm,
        BiasType::Dependency,
    ];

    pub const PAIRWISE: [BiasType; 4] = [
        BiasType::RelPrior,
        BiasType::Narrative,
        BiasType::Tense,
        BiasType::Dependency,
    ];

    pub const WARMUP: [BiasType; 2] = [BiasType::RelPriorWarm, BiasType::TenseWarm];

    pub fn as_str(self) -> &'static str {
        match self {
            BiasType::RelPrior => "rel_prior",
            BiasType::RelPriorWarm => "rel_prior_warmup",
            BiasType::Narrative => "narrative",
            BiasType::Tense => "tense",
            BiasType::TenseWarm => "tense_warmup",
            BiasType::Dependency => "dependency",
        }
    }

    /// Column heading used in rendered reports.
    pub fn display_name(self) -> &'static str {
        match self {
            BiasType::RelPrior => "Rel.Prior (relation)",
            BiasType::RelPriorWarm => "Rel.Prior (warm-up)",
            BiasType::Narrative => "Narrative",
            BiasType::Tense => "Tense (relation)",
            BiasType::TenseWarm => "Tense (warm-up)",
            BiasType::Dependency => "Dependency",
        }
    }

    pub fn is_warmup(self) -> bool {
        matches!(self, BiasType::RelPriorWarm | BiasType::TenseWarm)
    }

    /// Bias types that can fire on a dataset of the given kind.
    pub fn applicable(kind: DatasetKind) -> &'static [BiasType] {
        match kind {
            DatasetKind::Pairwise => &Self::PAIRWISE,
            DatasetKind::ReadingComprehension => &Self::ALL,
        }
    }
}

impl fmt::Display for BiasType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BiasType::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::UnknownBiasType(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// One event pair and one gold relation per record (MATRES style).
    Pairwise,
    /// Passage, question and gold answer events per record (TORQUE style).
    ReadingComprehension,
}
