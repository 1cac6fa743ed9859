mod support;

use std::collections::BTreeMap;
use std::time::Instant;

use proptest::prelude::*;
use serde_json::Value;
use support::{fixtures, naive_marginals, naive_pair_counts, random_pair_record, read_json_lines, rng, to_jsonl};
use tkc_core::bias::{build_tables, count_features, marginal_relation_freq, score, BiasTable, BiasTables, FeatureKey};
use tkc_core::corpus::{read_dataset, AnnotatedInstance};
use tkc_core::{BiasType, DatasetConfig, RelationLabel};

fn load(records: &[Value]) -> Vec<AnnotatedInstance> {
    read_dataset(to_jsonl(records).as_bytes(), &DatasetConfig::matres())
        .unwrap()
        .into_strict()
        .unwrap()
}

fn table_counts(tables: &BiasTables) -> BTreeMap<(String, String, String), u64> {
    let mut out = BTreeMap::new();
    for (bt, table) in &tables.tables {
        for (key, per_rel) in &table.counts {
            for (r, &n) in per_rel {
                if n > 0 {
                    out.insert((bt.to_string(), key.to_string(), r.to_string()), n);
                }
            }
        }
    }
    out
}

fn assert_normalized(tables: &BiasTables) {
    for table in tables.tables.values() {
        for (key, row) in &table.scores {
            let sum: f64 = row.values().sum();
            assert!((sum - 1.0).abs() <= 1e-9, "{} {key}: {sum}", table.bias_type);
            for &b in row.values() {
                assert!((0.0..=1.0).contains(&b));
            }
        }
    }
}

#[test]
fn synthetic_corpus_matches_brute_force_recount() {
    let records = read_json_lines(&fixtures().join("synthetic/pairs.jsonl"));
    assert!(records.len() <= 1000);
    let instances = load(&records);
    let start = Instant::now();
    let tables = build_tables(&instances, &DatasetConfig::matres(), "synthetic");
    let elapsed = start.elapsed();

    assert_eq!(table_counts(&tables), naive_pair_counts(&records));
    assert_normalized(&tables);
    let marginals = naive_marginals(&records);
    for table in tables.tables.values() {
        for (r, &n) in &table.relation_marginals {
            assert_eq!(marginals.get(r.as_str()).copied().unwrap_or(0), n);
        }
    }
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

#[test]
fn tense_row_of_seventy_twenty_seven_three() {
    let key = FeatureKey::Tense {
        pos1: "VBD".into(),
        pos2: "VB".into(),
    };
    for scale in [1, 2, 10] {
        let mut t = BiasTable::new(BiasType::Tense, RelationLabel::ORDERED.to_vec());
        t.add(key.clone(), RelationLabel::Before, 70 * scale);
        t.add(key.clone(), RelationLabel::After, 27 * scale);
        t.add(key.clone(), RelationLabel::Equal, 3 * scale);
        let t = score(t);
        for (r, want) in [(RelationLabel::Before, 0.70), (RelationLabel::After, 0.27), (RelationLabel::Equal, 0.03)] {
            let got = t.score_of(&key, r).unwrap();
            assert!((got - want).abs() <= 1e-9, "{r}: {got}");
        }
    }
}

#[test]
fn vague_counts_do_not_enter_an_ordered_relation_set() {
    let key = FeatureKey::Dependency {
        dep_label: "ccomp".into(),
    };
    let mut t = BiasTable::new(BiasType::Dependency, RelationLabel::ORDERED.to_vec());
    t.add(key.clone(), RelationLabel::After, 7);
    t.add(key.clone(), RelationLabel::Vague, 100);
    let t = score(t);
    assert_eq!(t.score_of(&key, RelationLabel::After), Some(1.0));
    assert_eq!(t.score_of(&key, RelationLabel::Vague), Some(0.0));
}

#[test]
fn unseen_keys_have_no_score() {
    let records = read_json_lines(&fixtures().join("matres/train.jsonl"));
    let tables = build_tables(&load(&records), &DatasetConfig::matres(), "train");
    let unseen = FeatureKey::RelPrior {
        lemma1: "zzz".into(),
        lemma2: "yyy".into(),
    };
    assert_eq!(tables.get(BiasType::RelPrior).unwrap().score_of(&unseen, RelationLabel::Before), None);
}

#[test]
fn marginals_follow_gold_distribution_of_fixture() {
    let records = read_json_lines(&fixtures().join("matres/train.jsonl"));
    let tables = build_tables(&load(&records), &DatasetConfig::matres(), "train");
    let freq = marginal_relation_freq(tables.get(BiasType::RelPrior).unwrap()).unwrap();
    for (r, n) in [("before", 16.0), ("after", 13.0), ("equal", 5.0), ("vague", 6.0)] {
        let got = freq[&r.parse::<RelationLabel>().unwrap()];
        assert!((got - n / 40.0).abs() < 1e-12, "{r}");
    }
}

fn corpus(seed: u64, n: usize) -> Vec<Value> {
    let mut r = rng(seed);
    (0..n).map(|i| random_pair_record(&mut r, i)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_normalize_and_match_recount(seed in any::<u64>(), n in 1usize..120) {
        let records = corpus(seed, n);
        let tables = build_tables(&load(&records), &DatasetConfig::matres(), "p");
        assert_normalized(&tables);
        prop_assert_eq!(table_counts(&tables), naive_pair_counts(&records));
    }

    #[test]
    fn merging_partial_tables_equals_counting_everything(seed in any::<u64>(), n in 2usize..120, cut in 0.0f64..1.0) {
        let records = corpus(seed, n);
        let instances = load(&records);
        let k = ((n as f64) * cut) as usize;
        let cfg = DatasetConfig::matres();
        let mut merged = count_features(&instances[..k], &cfg, "p");
        merged.merge(&count_features(&instances[k..], &cfg, "p"));
        merged.score_all();
        prop_assert_eq!(merged, build_tables(&instances, &cfg, "p"));
    }

    #[test]
    fn record_order_does_not_matter(seed in any::<u64>(), n in 2usize..80) {
        let records = corpus(seed, n);
        let mut reversed = records.clone();
        reversed.reverse();
        let cfg = DatasetConfig::matres();
        prop_assert_eq!(build_tables(&load(&records), &cfg, "p"), build_tables(&load(&reversed), &cfg, "p"));
    }
}
