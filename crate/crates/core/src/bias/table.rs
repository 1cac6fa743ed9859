use std::collections::BTreeMap;

use rayon::prelude::*;

use super::key::{unit_features, units, FeatureKey, Unit};
use crate::config::DatasetConfig;
use crate::corpus::AnnotatedInstance;
use crate::error::{Error, Result};
use crate::relation::{BiasType, RelationLabel};

/// Co-occurrence counts and bias scores of one bias type.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasTable {
    pub bias_type: BiasType,
    /// Relation set the scores are normalized over.
    pub relations: Vec<RelationLabel>,
    pub counts: BTreeMap<FeatureKey, BTreeMap<RelationLabel, u64>>,
    /// Empty until [`score`] runs. Keys with no count inside `relations`
    /// are absent.
    pub scores: BTreeMap<FeatureKey, BTreeMap<RelationLabel, f64>>,
    /// Gold-label tally over every pair (or warm-up event) of the split.
    pub relation_marginals: BTreeMap<RelationLabel, u64>,
}

impl BiasTable {
    pub fn new(bias_type: BiasType, relations: Vec<RelationLabel>) -> Self {
        Self {
            bias_type,
            relations,
            counts: BTreeMap::new(),
            scores: BTreeMap::new(),
            relation_marginals: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, key: FeatureKey, relation: RelationLabel, n: u64) {
        *self
            .counts
            .entry(key)
            .or_default()
            .entry(relation)
            .or_default() += n;
    }

    pub fn add_marginal(&mut self, relation: RelationLabel, n: u64) {
        *self.relation_marginals.entry(relation).or_default() += n;
    }

    /// Pointwise sum of counts and marginals. Scores are cleared.
    pub fn merge(&mut self, other: &BiasTable) {
        for (key, per_rel) in &other.counts {
            for (&r, &n) in per_rel {
                self.add(key.clone(), r, n);
            }
        }
        for (&r, &n) in &other.relation_marginals {
            self.add_marginal(r, n);
        }
        self.scores.clear();
    }

    pub fn count(&self, key: &FeatureKey, relation: RelationLabel) -> u64 {
        self.counts
            .get(key)
            .and_then(|m| m.get(&relation))
            .copied()
            .unwrap_or(0)
    }

    /// `None` when the key is unseen within the table's relation set.
    pub fn score_of(&self, key: &FeatureKey, relation: RelationLabel) -> Option<f64> {
        self.scores
            .get(key)
            .map(|m| m.get(&relation).copied().unwrap_or(0.0))
    }

    pub fn compute_scores(&mut self) {
        let mut scores = BTreeMap::new();
        for (key, per_rel) in &self.counts {
            let total: u64 = self
                .relations
                .iter()
                .map(|r| per_rel.get(r).copied().unwrap_or(0))
                .sum();
            if total == 0 {
                continue;
            }
            let row = self
                .relations
                .iter()
                .map(|&r| (r, per_rel.get(&r).copied().unwrap_or(0) as f64 / total as f64))
                .collect();
            scores.insert(key.clone(), row);
        }
        self.scores = scores;
    }
}

/// `b(key, r) = c(key, r) / sum over r' in R of c(key, r')`.
pub fn score(mut table: BiasTable) -> BiasTable {
    table.compute_scores();
    table
}

/// Context-free relation frequencies `c(r) / sum over r' in R of c(r')`,
/// over the table's relation set.
pub fn marginal_relation_freq(table: &BiasTable) -> Result<BTreeMap<RelationLabel, f64>> {
    let total: u64 = table
        .relations
        .iter()
        .map(|r| table.relation_marginals.get(r).copied().unwrap_or(0))
        .sum();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(table
        .relations
        .iter()
        .map(|&r| {
            let c = table.relation_marginals.get(&r).copied().unwrap_or(0);
            (r, c as f64 / total as f64)
        })
        .collect())
}

/// Tables for every bias type applicable to a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasTables {
    /// Dataset identifier and split, e.g. `matres/train`.
    pub source: String,
    pub relation_set: Vec<RelationLabel>,
    pub total_instances: usize,
    pub tables: BTreeMap<BiasType, BiasTable>,
}

impl BiasTables {
    pub fn empty(config: &DatasetConfig, source: impl Into<String>) -> Self {
        let tables = BiasType::applicable(config.kind)
            .iter()
            .map(|&bt| (bt, BiasTable::new(bt, config.relations_for(bt))))
            .collect();
        Self {
            source: source.into(),
            relation_set: config.relation_set.clone(),
            total_instances: 0,
            tables,
        }
    }

    pub fn get(&self, bias_type: BiasType) -> Option<&BiasTable> {
        self.tables.get(&bias_type)
    }

    pub fn merge(&mut self, other: &BiasTables) {
        for (bt, table) in &other.tables {
            match self.tables.get_mut(bt) {
                Some(mine) => mine.merge(table),
                None => {
                    self.tables.insert(*bt, table.clone());
                }
            }
        }
        self.total_instances += other.total_instances;
    }

    pub fn score_all(&mut self) {
        for table in self.tables.values_mut() {
            table.compute_scores();
        }
    }

    pub fn scored(mut self) -> Self {
        self.score_all();
        self
    }

    fn observe(&mut self, instance: &AnnotatedInstance, config: &DatasetConfig) {
        self.total_instances += 1;
        for unit in units(instance, config) {
            let warm = matches!(unit, Unit::Status { .. });
            for table in self.tables.values_mut() {
                if table.bias_type.is_warmup() == warm {
                    table.add_marginal(unit.relation(), 1);
                }
            }
            for (key, r) in unit_features(&unit, config) {
                if let Some(table) = self.tables.get_mut(&key.bias_type()) {
                    table.add(key, r, 1);
                }
            }
        }
    }
}

/// Tally feature/relation co-occurrences over a split. Counting runs in
/// parallel; the result does not depend on how the input is partitioned.
/// Scores are left empty; call [`BiasTables::score_all`] afterwards.
pub fn count_features(
    instances: &[AnnotatedInstance],
    config: &DatasetConfig,
    source: &str,
) -> BiasTables {
    instances
        .par_iter()
        .fold(
            || BiasTables::empty(config, source),
            |mut acc, instance| {
                acc.observe(instance, config);
                acc
            },
        )
        .reduce(
            || BiasTables::empty(config, source),
            |mut a, b| {
                a.merge(&b);
                a
            },
        )
}

/// Count and score in one step.
pub fn build_tables(
    instances: &[AnnotatedInstance],
    config: &DatasetConfig,
    source: &str,
) -> BiasTables {
    count_features(instances, config, source).scored()
}
