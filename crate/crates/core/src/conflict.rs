//! Thresholded conflict detection and subset selection.
//!
//! An observation `(key, r)` conflicts with the training distribution when
//! `b(key, r) < T_r`, where the threshold must not exceed the context-free
//! frequency of `r`. Narrative bias defaults to an explicit order rule.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{marginal_relation_freq, unit_features, units, BiasTable, BiasTables, FeatureKey, NarrativeOrder};
use crate::config::{DatasetConfig, NarrativeRule, Thresholds};
use crate::corpus::{AnnotatedInstance, PairInstance};
use crate::error::{Error, Result};
use crate::relation::{BiasType, RelationLabel};

/// Slack for thresholds set exactly at the marginal frequency.
const MARGINAL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Conflict,
    NonConflict,
    NotApplicable,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Conflict => "conflict",
            Flag::NonConflict => "non_conflict",
            Flag::NotApplicable => "not_applicable",
        }
    }
}

/// Decision for one instance and one bias type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictVerdict {
    pub instance_id: String,
    pub bias_type: BiasType,
    pub flag: Flag,
    /// The observation that decided the flag.
    pub feature_key: Option<String>,
    pub score: Option<f64>,
    pub threshold: Option<f64>,
    pub marginal: Option<f64>,
}

/// Marginal frequencies used for the threshold bound, with config overrides
/// taking precedence over the table's own tallies.
pub fn effective_marginals(table: &BiasTable, config: &DatasetConfig) -> BTreeMap<RelationLabel, f64> {
    let mut m = marginal_relation_freq(table).unwrap_or_default();
    for (&r, &f) in &config.marginal_freqs {
        if table.relations.contains(&r) {
            m.insert(r, f);
        }
    }
    m
}

fn check_threshold(
    bias_type: BiasType,
    relation: RelationLabel,
    threshold: f64,
    marginal: Option<f64>,
) -> Result<()> {
    match marginal {
        Some(m) if threshold > m + MARGINAL_EPS => Err(Error::InvalidThreshold {
            bias_type,
            relation,
            threshold,
            marginal: m,
        }),
        _ => Ok(()),
    }
}

/// Threshold rule for one observation. Unseen keys and relations without a
/// configured threshold are not applicable.
pub fn is_conflict(
    table: &BiasTable,
    key: &FeatureKey,
    relation: RelationLabel,
    config: &DatasetConfig,
) -> Result<Flag> {
    let Some(threshold) = config.thresholds.get(table.bias_type, relation) else {
        return Ok(Flag::NotApplicable);
    };
    if !table.relations.contains(&relation) {
        return Ok(Flag::NotApplicable);
    }
    let marginal = effective_marginals(table, config).get(&relation).copied();
    check_threshold(table.bias_type, relation, threshold, marginal)?;
    Ok(match table.score_of(key, relation) {
        None => Flag::NotApplicable,
        Some(b) if b < threshold => Flag::Conflict,
        Some(_) => Flag::NonConflict,
    })
}

/// Explicit narrative rule: the textual order contradicts the gold relation.
pub fn narrative_flag(order: NarrativeOrder, gold: RelationLabel) -> Flag {
    use RelationLabel::*;
    match (order, gold) {
        (_, Before | After | Equal) => {
            let clash = match order {
                NarrativeOrder::P1LtP2 => matches!(gold, After | Equal),
                NarrativeOrder::P1GtP2 => matches!(gold, Before | Equal),
            };
            if clash {
                Flag::Conflict
            } else {
                Flag::NonConflict
            }
        }
        _ => Flag::NotApplicable,
    }
}

pub fn narrative_conflict(pair: &PairInstance) -> Flag {
    match NarrativeOrder::of(pair.e1.token_index, pair.e2.token_index) {
        Some(order) => narrative_flag(order, pair.gold),
        None => Flag::NotApplicable,
    }
}

struct Judged {
    key: FeatureKey,
    flag: Flag,
    score: Option<f64>,
    threshold: Option<f64>,
    marginal: Option<f64>,
}

fn judge(
    table: &BiasTable,
    marginals: &BTreeMap<RelationLabel, f64>,
    key: FeatureKey,
    relation: RelationLabel,
    config: &DatasetConfig,
) -> Result<Judged> {
    let score = if table.relations.contains(&relation) {
        table.score_of(&key, relation)
    } else {
        None
    };
    let marginal = marginals.get(&relation).copied();
    if let (FeatureKey::Narrative { order }, NarrativeRule::OrderMismatch) = (&key, config.narrative_rule) {
        return Ok(Judged {
            flag: narrative_flag(*order, relation),
            key,
            score,
            threshold: None,
            marginal,
        });
    }
    let flag = is_conflict(table, &key, relation, config)?;
    Ok(Judged {
        key,
        flag,
        score,
        threshold: config.thresholds.get(table.bias_type, relation),
        marginal,
    })
}

/// Aggregate per-observation flags: any conflict makes the instance a
/// conflict (reported through its lowest-scoring observation), otherwise any
/// non-conflict makes it non-conflict.
fn aggregate(instance_id: &str, bias_type: BiasType, judged: Vec<Judged>) -> ConflictVerdict {
    let pick = judged
        .iter()
        .filter(|j| j.flag == Flag::Conflict)
        .min_by(|a, b| {
            let sa = a.score.unwrap_or(f64::INFINITY);
            let sb = b.score.unwrap_or(f64::INFINITY);
            sa.total_cmp(&sb)
        })
        .or_else(|| judged.iter().find(|j| j.flag == Flag::NonConflict))
        .or_else(|| judged.first());
    match pick {
        Some(j) => ConflictVerdict {
            instance_id: instance_id.to_string(),
            bias_type,
            flag: j.flag,
            feature_key: Some(j.key.to_string()),
            score: j.score,
            threshold: j.threshold,
            marginal: j.marginal,
        },
        None => ConflictVerdict {
            instance_id: instance_id.to_string(),
            bias_type,
            flag: Flag::NotApplicable,
            feature_key: None,
            score: None,
            threshold: None,
            marginal: None,
        },
    }
}

/// Verdicts for one instance, one per requested bias type.
pub fn instance_verdicts(
    instance: &AnnotatedInstance,
    tables: &BiasTables,
    marginals: &BTreeMap<BiasType, BTreeMap<RelationLabel, f64>>,
    config: &DatasetConfig,
    bias_types: &[BiasType],
) -> Result<Vec<ConflictVerdict>> {
    let mut by_type: BTreeMap<BiasType, Vec<Judged>> =
        bias_types.iter().map(|&bt| (bt, Vec::new())).collect();
    let no_marginals = BTreeMap::new();
    for unit in units(instance, config) {
        for (key, r) in unit_features(&unit, config) {
            let bt = key.bias_type();
            let (Some(list), Some(table)) = (by_type.get_mut(&bt), tables.get(bt)) else {
                continue;
            };
            let m = marginals.get(&bt).unwrap_or(&no_marginals);
            list.push(judge(table, m, key, r, config)?);
        }
    }
    Ok(by_type
        .into_iter()
        .map(|(bt, judged)| aggregate(instance.id(), bt, judged))
        .collect())
}

/// Check every threshold the evaluation data will exercise against its
/// marginal frequency, before any detection runs.
pub fn validate_thresholds(
    tables: &BiasTables,
    eval: &[AnnotatedInstance],
    config: &DatasetConfig,
    bias_types: &[BiasType],
) -> Result<()> {
    let used: BTreeSet<(BiasType, RelationLabel)> = eval
        .par_iter()
        .flat_map_iter(|inst| {
            units(inst, config)
                .iter()
                .flat_map(|u| unit_features(u, config))
                .map(|(k, r)| (k.bias_type(), r))
                .collect::<Vec<_>>()
        })
        .collect();
    for (bt, r) in used {
        if !bias_types.contains(&bt) {
            continue;
        }
        if bt == BiasType::Narrative && config.narrative_rule == NarrativeRule::OrderMismatch {
            continue;
        }
        let (Some(table), Some(threshold)) = (tables.get(bt), config.thresholds.get(bt, r)) else {
            continue;
        };
        if !table.relations.contains(&r) {
            continue;
        }
        let marginal = effective_marginals(table, config).get(&r).copied();
        check_threshold(bt, r, threshold, marginal)?;
    }
    Ok(())
}

/// Verdicts and conflict subsets of an evaluation split.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Sorted by instance id, then bias type.
    pub verdicts: Vec<ConflictVerdict>,
    /// Sorted conflict ids per bias type.
    pub subsets: BTreeMap<BiasType, Vec<String>>,
}

impl Selection {
    pub fn subset_sizes(&self) -> BTreeMap<BiasType, usize> {
        self.subsets.iter().map(|(&bt, ids)| (bt, ids.len())).collect()
    }

    /// Ids flagged non-conflict for a bias type, sorted.
    pub fn non_conflict(&self, bias_type: BiasType) -> Vec<String> {
        self.with_flag(bias_type, Flag::NonConflict)
    }

    pub fn with_flag(&self, bias_type: BiasType, flag: Flag) -> Vec<String> {
        self.verdicts
            .iter()
            .filter(|v| v.bias_type == bias_type && v.flag == flag)
            .map(|v| v.instance_id.clone())
            .collect()
    }
}

/// Flag every evaluation instance against training tables and collect the
/// conflict subsets. Bias types not applicable to the dataset are ignored.
pub fn select_subsets(
    tables: &BiasTables,
    eval: &[AnnotatedInstance],
    config: &DatasetConfig,
    bias_types: &[BiasType],
) -> Result<Selection> {
    let bias_types: Vec<BiasType> = bias_types
        .iter()
        .copied()
        .filter(|bt| BiasType::applicable(config.kind).contains(bt))
        .collect();
    validate_thresholds(tables, eval, config, &bias_types)?;
    let marginals: BTreeMap<BiasType, BTreeMap<RelationLabel, f64>> = bias_types
        .iter()
        .map(|&bt| {
            let m = tables
                .get(bt)
                .map(|t| effective_marginals(t, config))
                .unwrap_or_default();
            (bt, m)
        })
        .collect();
    let per_instance: Vec<Vec<ConflictVerdict>> = eval
        .par_iter()
        .map(|inst| instance_verdicts(inst, tables, &marginals, config, &bias_types))
        .collect::<Result<_>>()?;
    let mut verdicts: Vec<ConflictVerdict> = per_instance.into_iter().flatten().collect();
    verdicts.sort_by(|a, b| {
        a.instance_id
            .cmp(&b.instance_id)
            .then(a.bias_type.cmp(&b.bias_type))
    });
    let mut subsets: BTreeMap<BiasType, Vec<String>> =
        bias_types.iter().map(|&bt| (bt, Vec::new())).collect();
    for v in &verdicts {
        if v.flag == Flag::Conflict {
            subsets.get_mut(&v.bias_type).unwrap().push(v.instance_id.clone());
        }
    }
    Ok(Selection { verdicts, subsets })
}

/// One setting of a threshold sweep.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepPoint {
    pub name: String,
    /// Applied over the configured thresholds.
    #[serde(default)]
    pub overrides: Thresholds,
    /// Relations whose thresholds are raised to their marginal frequency,
    /// for every bias type.
    #[serde(default)]
    pub upper_bound: Vec<RelationLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub name: String,
    /// Subset sizes, or `None` when the point was skipped.
    pub sizes: Option<BTreeMap<BiasType, usize>>,
    pub skipped: Option<String>,
}

/// Subset sizes under each sweep point. Points whose thresholds exceed a
/// marginal frequency are reported and skipped.
pub fn threshold_sweep(
    tables: &BiasTables,
    eval: &[AnnotatedInstance],
    config: &DatasetConfig,
    bias_types: &[BiasType],
    points: &[SweepPoint],
) -> Vec<SweepResult> {
    points
        .iter()
        .map(|point| {
            let mut cfg = config.clone();
            cfg.thresholds.apply(&point.overrides);
            for &r in &point.upper_bound {
                for (&bt, table) in &tables.tables {
                    if bt.is_warmup() != r.is_status() {
                        continue;
                    }
                    if let Some(&m) = effective_marginals(table, config).get(&r) {
                        cfg.thresholds.set(bt, r, m);
                    }
                }
            }
            let outcome = cfg
                .thresholds
                .check_range()
                .and_then(|_| select_subsets(tables, eval, &cfg, bias_types));
            match outcome {
                Ok(sel) => SweepResult {
                    name: point.name.clone(),
                    sizes: Some(sel.subset_sizes()),
                    skipped: None,
                },
                Err(e) => SweepResult {
                    name: point.name.clone(),
                    sizes: None,
                    skipped: Some(e.to_string()),
                },
            }
        })
        .collect()
}

pub fn verdicts_to_jsonl(verdicts: &[ConflictVerdict]) -> Result<String> {
    let mut out = String::new();
    for v in verdicts {
        out.push_str(&serde_json::to_string(v)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_verdicts(text: &str) -> Result<Vec<ConflictVerdict>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Write `verdicts.jsonl` and `subsets/<bias_type>.txt` under `dir`.
pub fn write_selection(selection: &Selection, dir: &Path) -> Result<()> {
    let subsets = dir.join("subsets");
    fs::create_dir_all(&subsets).map_err(|e| Error::io(&subsets, e))?;
    let verdicts = dir.join("verdicts.jsonl");
    fs::write(&verdicts, verdicts_to_jsonl(&selection.verdicts)?).map_err(|e| Error::io(&verdicts, e))?;
    for (bt, ids) in &selection.subsets {
        let path = subsets.join(format!("{bt}.txt"));
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        for id in ids {
            writeln!(f, "{id}").map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Read a subset listing, one id per line.
pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}
