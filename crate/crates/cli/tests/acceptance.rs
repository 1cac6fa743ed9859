//! One line per acceptance criterion: `cargo test -p tkc-cli --test acceptance`.
//! Runs without the libtest harness so the table is never captured.

mod common;
#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use serde_json::Value;
use tkc_core::bias::{build_tables, marginal_relation_freq, score, BiasTable, FeatureKey};
use tkc_core::cda::{
    demo_relations, derive_torque_qa, llm_demo_prompt, plm_aug_prompt, render, render_answered, warmup_aug_prompt,
    warmup_question, IclMode, TaskItem, Template,
};
use tkc_core::conflict::{is_conflict, read_id_list, select_subsets, Flag};
use tkc_core::corpus::{derive_pairs, load_dataset, read_dataset, AnnotatedInstance};
use tkc_core::eval::{compute, matres_f1, randomization_test, randomization_test_with, Answer, Metric};
use tkc_core::{BiasType, DatasetConfig, RelationLabel};

use RelationLabel::*;

const SCORE_TOL: f64 = 1e-9;
const METRIC_TOL: f64 = 1e-9;
const BIAS_RUNTIME_S: f64 = 1.0;
const SIGNIFICANCE_RUNTIME_S: f64 = 5.0;
const SEPARATION_P: f64 = 0.001;
const SWEEP_CONFIGS: usize = 50;
const ORACLE_CASES: usize = 500;

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn instances(records: &[Value], cfg: &DatasetConfig) -> Vec<AnnotatedInstance> {
    read_dataset(support::to_jsonl(records).as_bytes(), cfg)
        .unwrap()
        .into_strict()
        .unwrap()
}

fn fixture(path: &str, cfg: &DatasetConfig) -> Vec<AnnotatedInstance> {
    load_dataset(support::fixtures().join(path), cfg).unwrap().into_strict().unwrap()
}

fn bias_score_correctness() -> Check {
    let records = support::read_json_lines(&support::fixtures().join("synthetic/pairs.jsonl"));
    ensure(records.len() <= 1000, || format!("{} instances", records.len()))?;
    let cfg = DatasetConfig::matres();
    let parsed = instances(&records, &cfg);
    let start = Instant::now();
    let tables = build_tables(&parsed, &cfg, "synthetic");
    let elapsed = start.elapsed().as_secs_f64();
    let mut got = BTreeMap::new();
    for (bt, t) in &tables.tables {
        for (key, row) in &t.counts {
            for (r, &n) in row {
                got.insert((bt.to_string(), key.to_string(), r.to_string()), n);
            }
        }
        for (key, row) in &t.scores {
            let sum: f64 = row.values().sum();
            ensure((sum - 1.0).abs() <= SCORE_TOL, || format!("{bt} {key} sums to {sum}"))?;
        }
    }
    ensure(got == support::naive_pair_counts(&records), || "counts differ from recount".into())?;
    ensure(elapsed < BIAS_RUNTIME_S, || format!("took {elapsed:.3}s"))
}

fn tense_table() -> (BiasTable, FeatureKey) {
    let key = FeatureKey::Tense {
        pos1: "VBD".into(),
        pos2: "VB".into(),
    };
    let mut t = BiasTable::new(BiasType::Tense, RelationLabel::PAIRWISE.to_vec());
    for (r, n) in [(Before, 70), (After, 27), (Equal, 3)] {
        t.add(key.clone(), r, n);
    }
    for (r, n) in [(Before, 50), (After, 35), (Equal, 10), (Vague, 5)] {
        t.add_marginal(r, n);
    }
    (score(t), key)
}

fn score_formula() -> Check {
    let (t, key) = tense_table();
    for (r, want) in [(Before, 0.70), (After, 0.27), (Equal, 0.03)] {
        let got = t.score_of(&key, r).unwrap_or(f64::NAN);
        ensure((got - want).abs() <= SCORE_TOL, || format!("b({r}) = {got}"))?;
    }
    Ok(())
}

fn conflict_rule() -> Check {
    let (t, key) = tense_table();
    let cfg = DatasetConfig::matres();
    let flag = is_conflict(&t, &key, After, &cfg).map_err(|e| e.to_string())?;
    ensure(flag == Flag::Conflict, || format!("told/offer after flagged {flag:?}"))?;
    let tables = build_tables(&fixture("matres/train.jsonl", &cfg), &cfg, "train");
    let sel = select_subsets(&tables, &fixture("matres/dev.jsonl", &cfg), &cfg, &BiasType::PAIRWISE)
        .map_err(|e| e.to_string())?;
    for bt in BiasType::PAIRWISE {
        let golden = read_id_list(&support::fixtures().join(format!("matres/golden/{bt}.txt"))).unwrap();
        ensure(sel.subsets[&bt] == golden, || format!("{bt} subset differs from golden list"))?;
    }
    Ok(())
}

fn sweep_monotonicity() -> Check {
    let mut r = support::rng(2024);
    let cfg = DatasetConfig::matres();
    for case in 0..SWEEP_CONFIGS {
        let train: Vec<Value> = (0..120).map(|i| support::random_pair_record(&mut r, i)).collect();
        let dev: Vec<Value> = (0..60).map(|i| support::random_pair_record(&mut r, 1000 + i)).collect();
        let tables = build_tables(&instances(&train, &cfg), &cfg, "train");
        let dev = instances(&dev, &cfg);
        let marginals = marginal_relation_freq(tables.get(BiasType::RelPrior).unwrap()).unwrap();
        let low: [f64; 3] = std::array::from_fn(|_| r.random_range(0.0..1.0));
        let high: [f64; 3] = std::array::from_fn(|i| low[i] + (1.0 - low[i]) * r.random_range(0.0..1.0));
        let at = |fractions: &[f64; 3]| {
            let mut c = cfg.clone();
            for bt in BiasType::PAIRWISE {
                for (rel, f) in RelationLabel::ORDERED.into_iter().zip(fractions) {
                    c.thresholds.set(bt, rel, marginals[&rel] * f);
                }
            }
            select_subsets(&tables, &dev, &c, &BiasType::PAIRWISE).unwrap()
        };
        let (a, b) = (at(&low), at(&high));
        for bt in BiasType::PAIRWISE {
            let sa: BTreeSet<_> = a.subsets[&bt].iter().collect();
            let sb: BTreeSet<_> = b.subsets[&bt].iter().collect();
            ensure(sa.is_subset(&sb), || format!("config {case}: {bt} shrank"))?;
        }
        ensure(a.subsets[&BiasType::Narrative] == b.subsets[&BiasType::Narrative], || {
            format!("config {case}: narrative subset moved")
        })?;
    }
    Ok(())
}

fn triple_derivation() -> Check {
    let passage = "Bush gave four key speeches, called on supporters to elect him and urged them to vote.";
    let cands: Vec<Value> = [("gave", 1), ("called", 5), ("elect", 8), ("vote", 14)]
        .into_iter()
        .map(|(w, i)| {
            let s = passage.find(w).unwrap();
            serde_json::json!({"surface": w, "lemma": w, "token_index": i, "char_start": s,
                "char_end": s + w.len(), "pos_tag": "VBD", "sentence_index": 0})
        })
        .collect();
    let rec = serde_json::json!({"id": "d", "passage": passage,
        "question": "What happened after Bush gave four key speeches?",
        "candidates": cands, "gold_answer_indices": [1, 2, 3]});
    let inst = instances(&[rec], &DatasetConfig::torque()).remove(0);
    let got: BTreeSet<(String, RelationLabel, String)> = derive_pairs(inst.as_rc().unwrap())
        .triples
        .iter()
        .map(|t| (t.e1.surface.clone(), t.relation, t.e2.surface.clone()))
        .collect();
    let want: BTreeSet<_> = ["called", "elect", "vote"]
        .into_iter()
        .map(|b| ("gave".to_string(), Before, b.to_string()))
        .collect();
    ensure(got == want, || format!("{got:?}"))
}

fn metrics_oracle() -> Check {
    let mut r = support::rng(99);
    for case in 0..ORACLE_CASES {
        let n = r.random_range(1..10);
        let universe = r.random_range(1..7);
        let set = |r: &mut rand_chacha::ChaCha8Rng| -> BTreeSet<usize> {
            (0..universe).filter(|_| r.random_bool(0.4)).collect()
        };
        let p: Vec<_> = (0..n).map(|_| set(&mut r)).collect();
        let g: Vec<_> = (0..n).map(|_| set(&mut r)).collect();
        let em = p.iter().zip(&g).map(|(a, b)| support::oracle_em(a, b)).sum::<f64>() / n as f64;
        let f1 = p.iter().zip(&g).map(|(a, b)| support::oracle_f1(a, b)).sum::<f64>() / n as f64;
        let pa: Vec<_> = p.into_iter().map(Answer::Set).collect();
        let ga: Vec<_> = g.into_iter().map(Answer::Set).collect();
        let got_em = compute(Metric::Em, pa.iter().zip(&ga)).unwrap();
        let got_f1 = compute(Metric::F1, pa.iter().zip(&ga)).unwrap();
        ensure((got_em - em).abs() <= METRIC_TOL && (got_f1 - f1).abs() <= METRIC_TOL, || {
            format!("set case {case}")
        })?;

        let m = r.random_range(1..30);
        let pi: Vec<usize> = (0..m).map(|_| r.random_range(0..4)).collect();
        let gi: Vec<usize> = (0..m).map(|_| r.random_range(0..4)).collect();
        let (micro, macro_) = support::oracle_matres(&pi, &gi);
        let labels = |xs: &[usize]| xs.iter().map(|&i| RelationLabel::PAIRWISE[i]).collect::<Vec<_>>();
        let s = matres_f1(&labels(&pi), &labels(&gi)).unwrap();
        ensure(
            (s.micro_f1 - micro).abs() <= METRIC_TOL && (s.macro_f1 - macro_).abs() <= METRIC_TOL,
            || format!("relation case {case}"),
        )?;
    }
    let mut golds = vec![Before; 523];
    golds.extend(vec![After; 330]);
    golds.extend(vec![Equal; 123]);
    golds.extend(vec![Vague; 24]);
    let s = matres_f1(&vec![Before; 1000], &golds).unwrap();
    ensure((s.micro_f1 - 0.523).abs() <= METRIC_TOL, || format!("micro {}", s.micro_f1))
}

fn golden(name: &str) -> String {
    fs::read_to_string(common::repo_root().join("crates/core/tests/golden").join(name)).unwrap()
}

fn prompt_goldens() -> Check {
    let unruh = golden("matres_t3.txt");
    let ctx = unruh
        .strip_prefix("Given the document ")
        .and_then(|s| s.split(" and a list of temporal relations").next())
        .unwrap()
        .to_string();
    let pair = TaskItem::Pair {
        context: &ctx,
        e1: "suspect",
        e2: "flaring",
    };
    let rc = TaskItem::Rc {
        context: "Bush gave four key speeches, called on supporters to elect him and urged them to vote.",
        question: "What happened after Bush gave four key speeches?",
        events: vec!["gave", "called", "elect", "vote"],
    };
    let mut rendered = vec![
        ("torque_v1.txt", render(Template::TorqueV1, &rc).unwrap()),
        ("torque_v2.txt", render(Template::TorqueV2, &rc).unwrap()),
        ("matres_mcqa.txt", render(Template::MatresMcqa, &pair).unwrap()),
        ("matres_t2.txt", render(Template::MatresT2, &pair).unwrap()),
        ("matres_t3.txt", render(Template::MatresT3, &pair).unwrap()),
        (
            "matres_mcqa_answered_after.txt",
            render_answered(Template::MatresMcqa, &pair, &Answer::Relation(After)).unwrap(),
        ),
    ];
    for r in [Before, After, Equal] {
        rendered.push((leak(format!("plm_aug_{r}.txt")), plm_aug_prompt("draw", "approve", r).unwrap()));
        rendered.push((leak(format!("question_{r}.txt")), derive_torque_qa("approve", "draw", r).unwrap().question));
    }
    for r in RelationLabel::PAIRWISE {
        rendered.push((leak(format!("llm_demo_{r}.txt")), llm_demo_prompt("suspect", "flaring", r).unwrap()));
    }
    for r in [Happened, Happening, Future] {
        rendered.push((leak(format!("warmup_aug_{r}.txt")), warmup_aug_prompt("incident", "progress", r).unwrap()));
        rendered.push((leak(format!("question_{r}.txt")), warmup_question(r).unwrap()));
    }
    for (name, text) in &rendered {
        ensure(&golden(name) == text, || format!("{name} differs"))?;
    }
    let all: String = rendered.iter().map(|(_, t)| t.as_str()).collect();
    for phrase in [
        "Answer only with A, B, C, or D",
        "select none or several from",
        "Write a story where",
        "cannot be determined based on the context",
    ] {
        ensure(all.contains(phrase), || format!("missing {phrase:?}"))?;
    }
    Ok(())
}

fn leak(s: String) -> &'static str {
    Box::leak(s.into_boxed_str())
}

fn cda_set_logic() -> Check {
    let r = RelationLabel::PAIRWISE;
    for predicted in r {
        let want: Vec<_> = r.into_iter().filter(|&x| x != predicted).collect();
        ensure(demo_relations(&r, predicted, IclMode::Cda) == want, || format!("cda for {predicted}"))?;
        ensure(demo_relations(&r, predicted, IclMode::Gda) == r.to_vec(), || format!("gda for {predicted}"))?;
    }
    Ok(())
}

fn randomization() -> Check {
    let start = Instant::now();
    let mut r = support::rng(7);
    let golds: Vec<_> = (0..50).map(|_| Answer::Relation(RelationLabel::PAIRWISE[r.random_range(0..4)])).collect();
    let other: Vec<_> = (0..50).map(|_| Answer::Relation(RelationLabel::PAIRWISE[r.random_range(0..4)])).collect();
    let same = randomization_test(&other, &other, &golds, Metric::MicroF1, 10_000, 1).unwrap();
    ensure(same.p_value == 1.0, || format!("identical p = {}", same.p_value))?;

    let wrong: Vec<_> = golds
        .iter()
        .map(|g| match g {
            Answer::Relation(Before) => Answer::Relation(After),
            _ => Answer::Relation(Before),
        })
        .collect();
    let sep = randomization_test(&golds, &wrong, &golds, Metric::MicroF1, 10_000, 1).unwrap();
    ensure(sep.p_value < SEPARATION_P, || format!("separation p = {}", sep.p_value))?;

    let mean = |xs: &[&f64]| xs.iter().copied().sum::<f64>() / xs.len() as f64;
    for n in [5usize, 8, 12] {
        let a: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.random_bool(0.75)))).collect();
        let b: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.random_bool(0.35)))).collect();
        let exact = support::exhaustive_p(&a, &b);
        let iterations = 20_000;
        let mc = randomization_test_with(&a, &b, mean, iterations, 3).unwrap();
        let tol = 4.0 * (exact * (1.0 - exact) / iterations as f64).sqrt() + 2.0 / iterations as f64;
        ensure((mc.p_value - exact).abs() <= tol, || format!("n={n}: {} vs exact {exact}", mc.p_value))?;
        let again = randomization_test_with(&a, &b, mean, iterations, 3).unwrap();
        ensure(again == mc, || "same seed gave a different p".into())?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < SIGNIFICANCE_RUNTIME_S, || format!("took {elapsed:.2}s"))
}

fn pipeline(out: &Path) -> Check {
    let cfg = support::fixtures().join("matres/config.toml");
    let cfg = cfg.to_str().unwrap();
    let out = out.to_str().unwrap();
    for (cmd, replay) in [
        ("bias", false),
        ("detect", false),
        ("augment", true),
        ("icl", true),
        ("evaluate", false),
        ("report", false),
    ] {
        let mut args = vec!["--config", cfg, "--out", out];
        if replay {
            args.extend(["--backend", "replay"]);
        }
        args.push(cmd);
        let o = common::tkc(&args);
        ensure(o.status.success(), || {
            format!("{cmd}: {}", String::from_utf8_lossy(&o.stderr).trim())
        })?;
    }
    Ok(())
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn end_to_end_determinism() -> Check {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path())?;
    pipeline(b.path())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    ensure(fa.contains_key("report/report.md"), || "no report written".into())?;
    ensure(fa.keys().eq(fb.keys()), || "different file sets".into())?;
    for (name, bytes) in &fa {
        ensure(bytes == &fb[name], || format!("{name} differs"))?;
    }
    Ok(())
}

enum Outcome {
    Pass,
    Fail(String),
    Skipped(&'static str),
}

fn run(check: fn() -> Check) -> Outcome {
    match catch_unwind(AssertUnwindSafe(check)) {
        Ok(Ok(())) => Outcome::Pass,
        Ok(Err(msg)) => Outcome::Fail(msg),
        Err(panic) => Outcome::Fail(
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    }
}

type Criterion = (&'static str, Option<fn() -> Check>);

fn main() -> ExitCode {
    let checks: [Criterion; 11] = [
        ("bias-score correctness", Some(bias_score_correctness)),
        ("score formula (70/27/3 row)", Some(score_formula)),
        ("conflict rule and golden subsets", Some(conflict_rule)),
        ("threshold-sweep monotonicity", Some(sweep_monotonicity)),
        ("dataset-scale replication", None),
        ("triple derivation", Some(triple_derivation)),
        ("metrics oracle", Some(metrics_oracle)),
        ("prompt golden files", Some(prompt_goldens)),
        ("CDA demo relation sets", Some(cda_set_logic)),
        ("randomization test", Some(randomization)),
        ("end-to-end offline determinism", Some(end_to_end_determinism)),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        let outcome = match check {
            Some(f) => run(f),
            None => Outcome::Skipped("needs the licensed corpora and adapter output"),
        };
        match outcome {
            Outcome::Pass => println!("PASS    {name}"),
            Outcome::Skipped(why) => println!("SKIPPED {name}: {why}"),
            Outcome::Fail(why) => {
                println!("FAIL    {name}: {why}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("{} of {} criteria failed", failed.len(), checks.len());
        ExitCode::FAILURE
    }
}
