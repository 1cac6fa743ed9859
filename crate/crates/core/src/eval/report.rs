use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{compute, Answer, Metric};
use super::significance::randomization_test_with;
use crate::conflict::{ConflictVerdict, Flag};
use crate::error::{Error, Result};
use crate::relation::BiasType;

/// Label of the whole evaluation set.
pub const ALL: &str = "all";
/// Label of the mean over conflict subsets.
pub const CONFL_AVG: &str = "Confl.Avg";

#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOptions {
    /// Add pooled binary F1 next to per-question F1 for answer-set tasks.
    pub binary_f1: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScores {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_type: Option<BiasType>,
    pub size: usize,
    /// Metric name to value; `None` for an empty subset.
    pub values: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "↓")]
    Drop,
    #[serde(rename = "↑")]
    Rise,
    #[serde(rename = "=")]
    Same,
}

impl Direction {
    pub fn symbol(self) -> &'static str {
        match self {
            Direction::Drop => "↓",
            Direction::Rise => "↑",
            Direction::Same => "=",
        }
    }

    fn of(conflict: f64, non_conflict: f64) -> Self {
        if conflict < non_conflict {
            Direction::Drop
        } else if conflict > non_conflict {
            Direction::Rise
        } else {
            Direction::Same
        }
    }
}

/// Conflict subset against its non-conflict complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub bias_type: BiasType,
    pub metric: String,
    pub conflict: Option<f64>,
    pub non_conflict: Option<f64>,
    pub conflict_size: usize,
    pub non_conflict_size: usize,
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub subset: String,
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub p_value: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: Vec<Metric>,
    /// `all` first, then one row per conflict subset.
    pub subsets: Vec<SubsetScores>,
    pub confl_avg: BTreeMap<String, Option<f64>>,
    pub gaps: Vec<GapRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub significance: Vec<SignificanceRow>,
}

impl MetricsReport {
    pub fn subset(&self, name: &str) -> Option<&SubsetScores> {
        self.subsets.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Predictions and golds aligned by sorted id.
struct Aligned<'a> {
    ids: Vec<&'a str>,
    preds: Vec<&'a Answer>,
    golds: Vec<&'a Answer>,
}

fn align<'a>(
    preds: &'a BTreeMap<String, Answer>,
    golds: &'a BTreeMap<String, Answer>,
) -> Result<Aligned<'a>> {
    let mut out = Aligned {
        ids: Vec::with_capacity(golds.len()),
        preds: Vec::with_capacity(golds.len()),
        golds: Vec::with_capacity(golds.len()),
    };
    for (id, gold) in golds {
        let pred = preds
            .get(id)
            .ok_or_else(|| Error::Config(format!("no prediction for `{id}`")))?;
        out.ids.push(id);
        out.preds.push(pred);
        out.golds.push(gold);
    }
    Ok(out)
}

fn metrics_for(golds: &BTreeMap<String, Answer>, options: ReportOptions) -> Vec<Metric> {
    match golds.values().next() {
        Some(Answer::Relation(_)) => vec![Metric::MicroF1, Metric::MacroF1],
        _ if options.binary_f1 => vec![Metric::Em, Metric::F1, Metric::BinaryF1],
        _ => vec![Metric::Em, Metric::F1],
    }
}

/// Positions of the given ids in the aligned arrays.
fn positions(aligned: &Aligned<'_>, ids: &BTreeSet<&str>) -> Result<Vec<usize>> {
    let index: BTreeMap<&str, usize> = aligned.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    ids.iter()
        .map(|id| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Config(format!("verdict for `{id}` has no gold answer")))
        })
        .collect()
}

fn score_on(metric: Metric, preds: &[&Answer], golds: &[&Answer], idx: &[usize]) -> Result<Option<f64>> {
    if idx.is_empty() {
        return Ok(None);
    }
    compute(metric, idx.iter().map(|&i| (preds[i], golds[i]))).map(Some)
}

struct Partition {
    bias_type: BiasType,
    conflict: Vec<usize>,
    non_conflict: Vec<usize>,
}

fn partitions(aligned: &Aligned<'_>, verdicts: &[ConflictVerdict]) -> Result<Vec<Partition>> {
    let mut by_type: BTreeMap<BiasType, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    for v in verdicts {
        let entry = by_type.entry(v.bias_type).or_default();
        match v.flag {
            Flag::Conflict => {
                entry.0.insert(&v.instance_id);
            }
            Flag::NonConflict => {
                entry.1.insert(&v.instance_id);
            }
            Flag::NotApplicable => {}
        }
    }
    by_type
        .into_iter()
        .map(|(bias_type, (c, n))| {
            Ok(Partition {
                bias_type,
                conflict: positions(aligned, &c)?,
                non_conflict: positions(aligned, &n)?,
            })
        })
        .collect()
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Metrics on the whole set and on every conflict subset, their mean, and
/// the conflict/non-conflict gap per bias type.
///
/// Non-conflict rows use only instances flagged `non_conflict`; instances
/// without an applicable feature are in neither group.
pub fn subset_report(
    preds: &BTreeMap<String, Answer>,
    golds: &BTreeMap<String, Answer>,
    verdicts: &[ConflictVerdict],
    options: ReportOptions,
) -> Result<MetricsReport> {
    let aligned = align(preds, golds)?;
    let metrics = metrics_for(golds, options);
    let parts = partitions(&aligned, verdicts)?;
    let all: Vec<usize> = (0..aligned.ids.len()).collect();

    let row = |name: &str, bias_type, idx: &[usize]| -> Result<SubsetScores> {
        let mut values = BTreeMap::new();
        for &m in &metrics {
            values.insert(m.to_string(), score_on(m, &aligned.preds, &aligned.golds, idx)?);
        }
        Ok(SubsetScores {
            name: name.to_string(),
            bias_type,
            size: idx.len(),
            values,
        })
    };

    let mut subsets = vec![row(ALL, None, &all)?];
    for p in &parts {
        subsets.push(row(p.bias_type.as_str(), Some(p.bias_type), &p.conflict)?);
    }

    let confl_avg = metrics
        .iter()
        .map(|m| {
            let name = m.to_string();
            let avg = mean(subsets[1..].iter().map(|s| s.values[&name]));
            (name, avg)
        })
        .collect();

    let mut gaps = Vec::new();
    for p in &parts {
        for &m in &metrics {
            let conflict = score_on(m, &aligned.preds, &aligned.golds, &p.conflict)?;
            let non_conflict = score_on(m, &aligned.preds, &aligned.golds, &p.non_conflict)?;
            gaps.push(GapRow {
                bias_type: p.bias_type,
                metric: m.to_string(),
                conflict,
                non_conflict,
                conflict_size: p.conflict.len(),
                non_conflict_size: p.non_conflict.len(),
                direction: conflict.zip(non_conflict).map(|(c, n)| Direction::of(c, n)),
            });
        }
    }

    Ok(MetricsReport {
        metrics,
        subsets,
        confl_avg,
        gaps,
        significance: Vec::new(),
    })
}

/// Paired randomization tests of system A against system B on the whole
/// set, every non-empty conflict subset and the conflict average.
pub fn significance_rows(
    preds_a: &BTreeMap<String, Answer>,
    preds_b: &BTreeMap<String, Answer>,
    golds: &BTreeMap<String, Answer>,
    verdicts: &[ConflictVerdict],
    metrics: &[Metric],
    iterations: usize,
    seed: u64,
) -> Result<Vec<SignificanceRow>> {
    let a = align(preds_a, golds)?;
    let b = align(preds_b, golds)?;
    let parts = partitions(&a, verdicts)?;
    let all: Vec<usize> = (0..a.ids.len()).collect();
    let gold = &a.golds;

    // Validate answer kinds up front; the statistics below then cannot fail.
    for &m in metrics {
        score_on(m, &a.preds, gold, &all)?;
        score_on(m, &b.preds, gold, &all)?;
    }

    let mut rows = Vec::new();
    for &m in metrics {
        let mut groups: Vec<(String, Vec<usize>)> = vec![(ALL.to_string(), all.clone())];
        for p in parts.iter().filter(|p| !p.conflict.is_empty()) {
            groups.push((p.bias_type.as_str().to_string(), p.conflict.clone()));
        }
        for (name, idx) in &groups {
            let out = randomization_test_with(
                &a.preds,
                &b.preds,
                |preds| {
                    let p: Vec<&Answer> = preds.iter().map(|x| **x).collect();
                    score_on(m, &p, gold, idx).ok().flatten().unwrap_or(0.0)
                },
                iterations,
                seed,
            )?;
            rows.push(sig_row(name, m, out));
        }
        let subsets: Vec<&Vec<usize>> = groups[1..].iter().map(|(_, idx)| idx).collect();
        if !subsets.is_empty() {
            let out = randomization_test_with(
                &a.preds,
                &b.preds,
                |preds| {
                    let p: Vec<&Answer> = preds.iter().map(|x| **x).collect();
                    mean(subsets.iter().map(|idx| score_on(m, &p, gold, idx).ok().flatten()))
                        .unwrap_or(0.0)
                },
                iterations,
                seed,
            )?;
            rows.push(sig_row(CONFL_AVG, m, out));
        }
    }
    Ok(rows)
}

fn sig_row(name: &str, metric: Metric, out: super::significance::RandomizationOutcome) -> SignificanceRow {
    SignificanceRow {
        subset: name.to_string(),
        metric: metric.to_string(),
        a: out.a,
        b: out.b,
        delta: out.delta,
        p_value: out.p_value,
        iterations: out.iterations,
    }
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}", x * 100.0),
        None => "n/a".to_string(),
    }
}

fn heading(s: &SubsetScores) -> &str {
    match s.bias_type {
        Some(bt) => bt.display_name(),
        None => "All",
    }
}

/// Markdown tables: metrics by subset, then conflict gaps and significance.
/// Values are percentages with one decimal.
pub fn render_markdown(report: &MetricsReport) -> String {
    let mut md = String::new();
    let mut header = vec!["Metric".to_string()];
    header.extend(report.subsets.iter().map(|s| heading(s).to_string()));
    header.push(CONFL_AVG.to_string());
    let _ = writeln!(md, "| {} |", header.join(" | "));
    let _ = writeln!(md, "|{}", "---|".repeat(header.len()));
    let mut sizes = vec!["n".to_string()];
    sizes.extend(report.subsets.iter().map(|s| s.size.to_string()));
    sizes.push(String::new());
    let _ = writeln!(md, "| {} |", sizes.join(" | "));
    for m in &report.metrics {
        let name = m.to_string();
        let mut cells = vec![name.clone()];
        cells.extend(report.subsets.iter().map(|s| fmt_value(s.values[&name])));
        cells.push(fmt_value(report.confl_avg.get(&name).copied().flatten()));
        let _ = writeln!(md, "| {} |", cells.join(" | "));
    }

    if !report.gaps.is_empty() {
        md.push('\n');
        let _ = writeln!(md, "| Bias type | Metric | Conflict | Non-conflict | |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for g in &report.gaps {
            let _ = writeln!(
                md,
                "| {} | {} | {} ({}) | {} ({}) | {} |",
                g.bias_type.display_name(),
                g.metric,
                fmt_value(g.conflict),
                g.conflict_size,
                fmt_value(g.non_conflict),
                g.non_conflict_size,
                g.direction.map(Direction::symbol).unwrap_or("")
            );
        }
    }

    if !report.significance.is_empty() {
        md.push('\n');
        let _ = writeln!(md, "| Subset | Metric | A | B | Δ | p |");
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for s in &report.significance {
            let _ = writeln!(
                md,
                "| {} | {} | {:.1} | {:.1} | {:+.1} | {:.4} |",
                s.subset,
                s.metric,
                s.a * 100.0,
                s.b * 100.0,
                s.delta * 100.0,
                s.p_value
            );
        }
    }
    md
}
