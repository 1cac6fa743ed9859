//! Dataset configuration: relation sets, conflict thresholds and presets.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::QuestionParser;
use crate::error::{Error, Result};
use crate::relation::{BiasType, DatasetKind, RelationLabel};

/// Per-(bias type, relation) conflict thresholds.
///
/// Serialized as a flat map keyed `"bias_type:relation"`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Thresholds(BTreeMap<(BiasType, RelationLabel), f64>);

impl Thresholds {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reading-comprehension defaults.
    ///
    /// Warm-up statuses have no published value; they reuse the relation
    /// prior value of 0.25.
    pub fn torque() -> Self {
        use RelationLabel::*;
        let mut t = Self::new();
        for r in [Before, After, Equal] {
            t.set(BiasType::RelPrior, r, 0.25);
            t.set(BiasType::Narrative, r, 0.5);
            t.set(BiasType::Dependency, r, 0.5);
        }
        t.set(BiasType::Tense, Before, 0.25);
        t.set(BiasType::Tense, After, 0.25);
        t.set(BiasType::Tense, Equal, 0.2);
        for s in RelationLabel::STATUSES {
            t.set(BiasType::RelPriorWarm, s, 0.25);
            t.set(BiasType::TenseWarm, s, 0.25);
        }
        t
    }

    /// Pairwise defaults: 0.3 for before/after and 0.1 for equal, for every
    /// bias type. Vague has no threshold and is never flagged.
    pub fn matres() -> Self {
        use RelationLabel::*;
        let mut t = Self::new();
        for bt in BiasType::PAIRWISE {
            t.set(bt, Before, 0.3);
            t.set(bt, After, 0.3);
            t.set(bt, Equal, 0.1);
        }
        t
    }

    pub fn get(&self, bias_type: BiasType, relation: RelationLabel) -> Option<f64> {
        self.0.get(&(bias_type, relation)).copied()
    }

    pub fn set(&mut self, bias_type: BiasType, relation: RelationLabel, value: f64) {
        self.0.insert((bias_type, relation), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (BiasType, RelationLabel, f64)> + '_ {
        self.0.iter().map(|(&(b, r), &v)| (b, r, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy every entry of `other` over `self`.
    pub fn apply(&mut self, other: &Thresholds) {
        for (b, r, v) in other.iter() {
            self.set(b, r, v);
        }
    }

    /// Parse overrides such as `tense:after=0.25,*:before=0.3`.
    ///
    /// `*` expands to every bias type whose relation family matches the
    /// relation (pairwise types for pairwise relations, warm-up types for
    /// statuses).
    pub fn parse_overrides(spec: &str) -> Result<Self> {
        let mut t = Self::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("threshold override `{item}` lacks `=`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("threshold override `{item}` is not a number")))?;
            for (b, r) in parse_threshold_key(key.trim())? {
                t.set(b, r, value);
            }
        }
        Ok(t)
    }

    /// Every value must lie in [0, 1].
    pub fn check_range(&self) -> Result<()> {
        for (bias_type, relation, threshold) in self.iter() {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::ThresholdRange {
                    bias_type,
                    relation,
                    threshold,
                });
            }
        }
        Ok(())
    }
}

fn parse_threshold_key(key: &str) -> Result<Vec<(BiasType, RelationLabel)>> {
    let (bias, rel) = key
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("threshold key `{key}` must be bias_type:relation")))?;
    let relation: RelationLabel = rel.parse()?;
    if bias == "*" {
        let family: &[BiasType] = if relation.is_status() {
            &BiasType::WARMUP
        } else {
            &BiasType::PAIRWISE
        };
        return Ok(family.iter().map(|&b| (b, relation)).collect());
    }
    let bias_type: BiasType = bias.parse()?;
    if bias_type.is_warmup() != relation.is_status() {
        return Err(Error::Config(format!(
            "threshold key `{key}` mixes a warm-up bias type with a pairwise relation"
        )));
    }
    Ok(vec![(bias_type, relation)])
}

impl Serialize for Thresholds {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let flat: BTreeMap<String, f64> = self
            .iter()
            .map(|(b, r, v)| (format!("{b}:{r}"), v))
            .collect();
        flat.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Thresholds {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let flat = BTreeMap::<String, f64>::deserialize(deserializer)?;
        let mut t = Thresholds::new();
        for (key, value) in flat {
            for (b, r) in parse_threshold_key(&key).map_err(D::Error::custom)? {
                t.set(b, r, value);
            }
        }
        Ok(t)
    }
}

/// How narrative conflicts are decided.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NarrativeRule {
    /// Textual order disagrees with the gold relation.
    #[default]
    OrderMismatch,
    /// Same thresholded score rule as the other bias types.
    Threshold,
}

/// Everything the bias engine and the conflict detector need to know about
/// a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Active pairwise relation set R.
    pub relation_set: Vec<RelationLabel>,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Optional overrides for the context-free relation frequencies. When a
    /// relation is absent here, the bias table's own marginal is used.
    #[serde(default)]
    pub marginal_freqs: BTreeMap<RelationLabel, f64>,
    /// Relations that narrative keys are emitted and scored for.
    #[serde(default = "default_narrative_relations")]
    pub narrative_relations: Vec<RelationLabel>,
    #[serde(default)]
    pub narrative_rule: NarrativeRule,
    #[serde(default)]
    pub question_parser: QuestionParser,
}

fn default_narrative_relations() -> Vec<RelationLabel> {
    RelationLabel::ORDERED.to_vec()
}

impl DatasetConfig {
    /// Pairwise relation-extraction preset over {before, after, equal, vague}.
    pub fn matres() -> Self {
        Self {
            kind: DatasetKind::Pairwise,
            relation_set: RelationLabel::PAIRWISE.to_vec(),
            thresholds: Thresholds::matres(),
            marginal_freqs: BTreeMap::new(),
            narrative_relations: default_narrative_relations(),
            narrative_rule: NarrativeRule::OrderMismatch,
            question_parser: QuestionParser::default(),
        }
    }

    /// Reading-comprehension preset. Parsed questions only yield
    /// before/after/equal, so R has three members.
    pub fn torque() -> Self {
        Self {
            kind: DatasetKind::ReadingComprehension,
            relation_set: RelationLabel::ORDERED.to_vec(),
            thresholds: Thresholds::torque(),
            marginal_freqs: BTreeMap::new(),
            narrative_relations: default_narrative_relations(),
            narrative_rule: NarrativeRule::OrderMismatch,
            question_parser: QuestionParser::default(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "matres" | "pairwise" => Ok(Self::matres()),
            "torque" | "reading_comprehension" => Ok(Self::torque()),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }

    /// The relation set a table of the given bias type is scored over.
    pub fn relations_for(&self, bias_type: BiasType) -> Vec<RelationLabel> {
        match bias_type {
            BiasType::RelPriorWarm | BiasType::TenseWarm => RelationLabel::STATUSES.to_vec(),
            BiasType::Narrative => self
                .narrative_relations
                .iter()
                .copied()
                .filter(|r| self.relation_set.contains(r))
                .collect(),
            _ => self.relation_set.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.relation_set.is_empty() {
            return Err(Error::Config("relation_set is empty".into()));
        }
        if let Some(r) = self.relation_set.iter().find(|r| r.is_status()) {
            return Err(Error::Config(format!(
                "relation_set holds warm-up status `{r}`; statuses are implicit"
            )));
        }
        if let Some(r) = self.narrative_relations.iter().find(|r| r.is_status()) {
            return Err(Error::Config(format!("narrative_relations holds status `{r}`")));
        }
        for (&r, &f) in &self.marginal_freqs {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("marginal frequency for {r} is {f}")));
            }
        }
        self.thresholds.check_range()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_published_thresholds() {
        let m = Thresholds::matres();
        assert_eq!(m.get(BiasType::Tense, RelationLabel::After), Some(0.3));
        assert_eq!(m.get(BiasType::RelPrior, RelationLabel::Equal), Some(0.1));
        assert_eq!(m.get(BiasType::Tense, RelationLabel::Vague), None);

        let t = Thresholds::torque();
        assert_eq!(t.get(BiasType::RelPrior, RelationLabel::Equal), Some(0.25));
        assert_eq!(t.get(BiasType::Tense, RelationLabel::Equal), Some(0.2));
        assert_eq!(t.get(BiasType::Narrative, RelationLabel::Before), Some(0.5));
        assert_eq!(t.get(BiasType::Dependency, RelationLabel::After), Some(0.5));
    }

    #[test]
    fn overrides_parse_with_wildcards() {
        let t = Thresholds::parse_overrides("tense:after=0.2, *:before=0.523").unwrap();
        assert_eq!(t.get(BiasType::Tense, RelationLabel::After), Some(0.2));
        for bt in BiasType::PAIRWISE {
            assert_eq!(t.get(bt, RelationLabel::Before), Some(0.523));
        }
        assert_eq!(t.get(BiasType::RelPriorWarm, RelationLabel::Before), None);

        assert!(Thresholds::parse_overrides("tense_warmup:before=0.1").is_err());
        assert!(Thresholds::parse_overrides("tense:after").is_err());
    }

    #[test]
    fn out_of_range_threshold_is_rejected() {
        let mut cfg = DatasetConfig::matres();
        cfg.thresholds.set(BiasType::Tense, RelationLabel::Before, 1.5);
        assert!(matches!(cfg.validate(), Err(Error::ThresholdRange { .. })));
    }

    #[test]
    fn thresholds_serialize_as_flat_map() {
        let mut t = Thresholds::new();
        t.set(BiasType::Tense, RelationLabel::After, 0.25);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"tense:after":0.25}"#);
        let back: Thresholds = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
