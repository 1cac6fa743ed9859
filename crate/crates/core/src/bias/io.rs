//! Diff-stable text serialization of bias tables.
//!
//! Rows are `bias_type<TAB>feature_key<TAB>relation<TAB>count<TAB>score`,
//! sorted lexicographically. Scores are written as the shortest decimal that
//! round-trips, or `NA` for relations outside the table's relation set and
//! for unseen keys. A JSON sidecar carries the source split, the relation
//! sets and the marginal tallies.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::key::FeatureKey;
use super::table::{BiasTable, BiasTables};
use crate::error::{Error, Result};
use crate::relation::{BiasType, RelationLabel};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    source: String,
    relation_set: Vec<RelationLabel>,
    total_instances: usize,
    tables: BTreeMap<BiasType, SidecarTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SidecarTable {
    relations: Vec<RelationLabel>,
    relation_marginals: BTreeMap<RelationLabel, u64>,
}

/// Render the TSV body.
pub fn tables_to_tsv(tables: &BiasTables) -> String {
    let mut rows = Vec::new();
    for table in tables.tables.values() {
        for (key, per_rel) in &table.counts {
            let mut rels: Vec<RelationLabel> = table.relations.clone();
            rels.extend(per_rel.keys().filter(|r| !table.relations.contains(r)));
            for r in rels {
                let count = per_rel.get(&r).copied().unwrap_or(0);
                let score = if table.relations.contains(&r) {
                    table.score_of(key, r).map(|s| s.to_string())
                } else {
                    None
                };
                rows.push(format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    table.bias_type,
                    key,
                    r,
                    count,
                    score.as_deref().unwrap_or("NA")
                ));
            }
        }
    }
    rows.sort();
    rows.concat()
}

pub fn sidecar_json(tables: &BiasTables) -> Result<String> {
    let sidecar = Sidecar {
        source: tables.source.clone(),
        relation_set: tables.relation_set.clone(),
        total_instances: tables.total_instances,
        tables: tables
            .tables
            .iter()
            .map(|(&bt, t)| {
                (
                    bt,
                    SidecarTable {
                        relations: t.relations.clone(),
                        relation_marginals: t.relation_marginals.clone(),
                    },
                )
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&sidecar)? + "\n")
}

/// Sidecar path used next to a table file: `tables.tsv` → `tables.meta.json`.
pub fn sidecar_path(tsv: &Path) -> std::path::PathBuf {
    tsv.with_extension("meta.json")
}

pub fn write_tables(tables: &BiasTables, tsv: &Path) -> Result<()> {
    fs::write(tsv, tables_to_tsv(tables)).map_err(|e| Error::io(tsv, e))?;
    let meta = sidecar_path(tsv);
    fs::write(&meta, sidecar_json(tables)?).map_err(|e| Error::io(&meta, e))
}

/// Rebuild tables from TSV text and sidecar JSON. Scores are recomputed
/// from the counts.
pub fn parse_tables(tsv: &str, sidecar: &str) -> Result<BiasTables> {
    let meta: Sidecar = serde_json::from_str(sidecar)?;
    let mut tables = BiasTables {
        source: meta.source,
        relation_set: meta.relation_set,
        total_instances: meta.total_instances,
        tables: meta
            .tables
            .into_iter()
            .map(|(bt, t)| {
                let mut table = BiasTable::new(bt, t.relations);
                table.relation_marginals = t.relation_marginals;
                (bt, table)
            })
            .collect(),
    };
    for (n, line) in tsv.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse(format!("table line {}: {msg}", n + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad(format!("expected 5 columns, found {}", cols.len())));
        }
        let bias_type: BiasType = cols[0].parse()?;
        let key = FeatureKey::parse(bias_type, cols[1])?;
        let relation: RelationLabel = cols[2].parse()?;
        let count: u64 = cols[3]
            .parse()
            .map_err(|_| bad(format!("count `{}` is not an integer", cols[3])))?;
        if cols[4] != "NA" && cols[4].parse::<f64>().is_err() {
            return Err(bad(format!("score `{}` is not a number", cols[4])));
        }
        let table = tables
            .tables
            .get_mut(&bias_type)
            .ok_or_else(|| bad(format!("bias type {bias_type} missing from metadata")))?;
        if count > 0 {
            table.add(key, relation, count);
        } else {
            table.counts.entry(key).or_default();
        }
    }
    tables.score_all();
    Ok(tables)
}

pub fn read_tables(tsv: &Path) -> Result<BiasTables> {
    let body = fs::read_to_string(tsv).map_err(|e| Error::io(tsv, e))?;
    let meta = sidecar_path(tsv);
    let sidecar = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    parse_tables(&body, &sidecar)
}
