//! Metrics, per-subset reports and significance testing.

mod metrics;
mod report;
mod significance;

use std::collections::BTreeMap;

use serde_json::Value;

pub use metrics::{compute, matres_f1, torque_em, torque_f1, Answer, MatresScores, Metric};
pub use report::{
    render_markdown, significance_rows, subset_report, Direction, GapRow, MetricsReport,
    ReportOptions, SignificanceRow, SubsetScores, ALL, CONFL_AVG,
};
pub use significance::{randomization_test, randomization_test_with, RandomizationOutcome};

use crate::corpus::AnnotatedInstance;
use crate::error::{Error, Result};

/// Gold answers keyed by instance id.
pub fn gold_answers(instances: &[AnnotatedInstance]) -> BTreeMap<String, Answer> {
    instances
        .iter()
        .map(|inst| {
            let answer = match inst {
                AnnotatedInstance::Pair(p) => Answer::Relation(p.gold),
                AnnotatedInstance::Rc(q) => Answer::Set(q.gold_answer_indices.iter().copied().collect()),
            };
            (inst.id().to_string(), answer)
        })
        .collect()
}

/// Read answers from JSONL. Each line needs an `id` and one of
/// `answer_indices`, `relation` (prediction records) or
/// `gold_answer_indices`, `gold` (canonical records).
pub fn parse_answer_records(text: &str) -> Result<BTreeMap<String, Answer>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |field: &str, message: String| Error::Record {
            line: n + 1,
            field: field.to_string(),
            message,
        };
        let v: Value = serde_json::from_str(line).map_err(|e| err("$", e.to_string()))?;
        let id = v
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| err("id", "missing string id".into()))?;
        let answer = if let Some(field) = ["answer_indices", "gold_answer_indices"]
            .into_iter()
            .find(|f| v.get(*f).is_some())
        {
            let set = serde_json::from_value(v[field].clone()).map_err(|e| err(field, e.to_string()))?;
            Answer::Set(set)
        } else if let Some(field) = ["relation", "gold"].into_iter().find(|f| v.get(*f).is_some()) {
            let label = v[field]
                .as_str()
                .ok_or_else(|| err(field, "expected a string".into()))?
                .parse()
                .map_err(|e: Error| err(field, e.to_string()))?;
            Answer::Relation(label)
        } else {
            return Err(err("$", "no answer field".into()));
        };
        if out.insert(id.to_string(), answer).is_some() {
            return Err(err("id", format!("duplicate id `{id}`")));
        }
    }
    Ok(out)
}
