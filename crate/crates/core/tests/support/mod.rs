//! Independent oracles shared by the integration suites. Nothing here calls
//! into the library beyond its public data types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn fixtures() -> PathBuf {
    repo_root().join("fixtures")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn read_json_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// `(bias_type, key, relation) -> count` by direct reading of raw pairwise
/// records. Keys use the table's text rendering.
pub fn naive_pair_counts(records: &[Value]) -> BTreeMap<(String, String, String), u64> {
    let mut out = BTreeMap::new();
    let mut bump = |bt: &str, key: String, rel: &str| {
        *out.entry((bt.to_string(), key, rel.to_string())).or_insert(0) += 1;
    };
    for r in records {
        let gold = r["gold"].as_str().unwrap();
        let (e1, e2) = (&r["e1"], &r["e2"]);
        bump(
            "rel_prior",
            format!("{}|{}", e1["lemma"].as_str().unwrap(), e2["lemma"].as_str().unwrap()),
            gold,
        );
        let (p1, p2) = (e1["token_index"].as_u64().unwrap(), e2["token_index"].as_u64().unwrap());
        if gold != "vague" && p1 != p2 {
            bump("narrative", if p1 < p2 { "p1_lt_p2" } else { "p1_gt_p2" }.into(), gold);
        }
        let (t1, t2) = (e1["pos_tag"].as_str().unwrap(), e2["pos_tag"].as_str().unwrap());
        if t1 != "UNK" && t2 != "UNK" {
            bump("tense", format!("{t1}|{t2}"), gold);
        }
        if let Some(dep) = r.get("dep_label").and_then(Value::as_str) {
            bump("dependency", dep.to_string(), gold);
        }
    }
    out
}

/// Gold-label tally of raw pairwise records.
pub fn naive_marginals(records: &[Value]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r["gold"].as_str().unwrap().to_string()).or_insert(0) += 1;
    }
    out
}

pub const LABELS: [&str; 4] = ["before", "after", "equal", "vague"];

/// Random pairwise record drawn from small vocabularies so keys repeat.
pub fn random_pair_record(rng: &mut impl Rng, id: usize) -> Value {
    const LEMMAS: [&str; 5] = ["say", "go", "eat", "win", "die"];
    const TAGS: [&str; 5] = ["VBD", "VB", "VBG", "VBN", "UNK"];
    const DEPS: [&str; 3] = ["ccomp", "xcomp", "advcl"];
    let tokens = 8;
    let i1 = rng.random_range(0..tokens);
    let mut i2 = rng.random_range(0..tokens);
    if i2 == i1 {
        i2 = (i1 + 1) % tokens;
    }
    let l1 = LEMMAS[rng.random_range(0..LEMMAS.len())];
    let l2 = LEMMAS[rng.random_range(0..LEMMAS.len())];
    let words: Vec<String> = (0..tokens)
        .map(|i| match i {
            _ if i == i1 => l1.to_string(),
            _ if i == i2 => l2.to_string(),
            _ => format!("w{i}"),
        })
        .collect();
    let start = |idx: usize| words[..idx].iter().map(|w| w.len() + 1).sum::<usize>();
    let mention = |idx: usize, lemma: &str, tag: &str| {
        serde_json::json!({
            "surface": lemma, "lemma": lemma, "token_index": idx,
            "char_start": start(idx), "char_end": start(idx) + lemma.len(),
            "pos_tag": tag, "sentence_index": 0,
        })
    };
    let mut rec = serde_json::json!({
        "id": format!("r{id:04}"),
        "context": words.join(" "),
        "e1": mention(i1, l1, TAGS[rng.random_range(0..TAGS.len())]),
        "e2": mention(i2, l2, TAGS[rng.random_range(0..TAGS.len())]),
        "gold": LABELS[rng.random_range(0..4)],
    });
    if rng.random_bool(0.6) {
        rec["dep_label"] = DEPS[rng.random_range(0..DEPS.len())].into();
    }
    rec
}

pub fn to_jsonl(records: &[Value]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

/// Exact match of two answer sets.
pub fn oracle_em(p: &BTreeSet<usize>, g: &BTreeSet<usize>) -> f64 {
    f64::from(u8::from(p.iter().eq(g.iter())))
}

/// Token-overlap F1 written out from precision and recall.
pub fn oracle_f1(p: &BTreeSet<usize>, g: &BTreeSet<usize>) -> f64 {
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let common = p.iter().filter(|x| g.contains(x)).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    let precision = common / p.len() as f64;
    let recall = common / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Micro and macro F1 from a full 4x4 confusion matrix.
pub fn oracle_matres(preds: &[usize], golds: &[usize]) -> (f64, f64) {
    let mut m = [[0u64; 4]; 4];
    for (&p, &g) in preds.iter().zip(golds) {
        m[g][p] += 1;
    }
    let n = preds.len() as f64;
    let diag: u64 = (0..4).map(|i| m[i][i]).sum();
    let micro = diag as f64 / n;
    let mut macro_sum = 0.0;
    for (c, row) in m.iter().enumerate() {
        let tp = row[c] as f64;
        let predicted: u64 = m.iter().map(|r| r[c]).sum();
        let actual: u64 = row.iter().sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        macro_sum += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    (micro, macro_sum / 4.0)
}

/// Exact two-sided p-value of the paired randomization test: the share of
/// all 2^n swap patterns whose statistic gap reaches the observed one.
pub fn exhaustive_p(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let observed = (mean(a) - mean(b)).abs();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let mut pa = Vec::with_capacity(n);
        let mut pb = Vec::with_capacity(n);
        for i in 0..n {
            if mask >> i & 1 == 1 {
                pa.push(b[i]);
                pb.push(a[i]);
            } else {
                pa.push(a[i]);
                pb.push(b[i]);
            }
        }
        if (mean(&pa) - mean(&pb)).abs() + 1e-12 >= observed {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}
