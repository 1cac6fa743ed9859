//! Shared helpers: a deterministic stand-in generator, a toy annotator for
//! generated contexts, and regeneration of the committed replay fixtures.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tkc_core::bias::build_tables;
use tkc_core::cda::{
    generate, plan_augmentation, prompt_sha256, read_fixture, run_icl_batch, write_fixture, Annotation,
    AugmentOptions, AugmentedExample, CachingClient, GenerationClient, GenerationParams, IclMode, IclOptions, Mode,
    Template,
};
use tkc_core::corpus::{load_dataset, EventMention};
use tkc_core::{DatasetConfig, Result};

pub const SEED: u64 = 7;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn fixtures() -> PathBuf {
    repo_root().join("fixtures")
}

pub fn tkc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tkc")).args(args).output().unwrap()
}

fn digest_byte(text: &str) -> u8 {
    u8::from_str_radix(&prompt_sha256(text)[..2], 16).unwrap()
}

const PHRASES: [&str; 3] = ["in the same time as", "before", "after"];

/// Split `"{a} happens {phrase} {b}"`.
fn happens(rest: &str) -> Option<(&str, &str, &str)> {
    let (a, tail) = rest.split_once(" happens ")?;
    PHRASES
        .iter()
        .find_map(|p| tail.strip_prefix(p).map(|b| (a, *p, b.trim())))
}

/// Deterministic generator keyed on the prompt text and sample index.
pub struct Synthetic;

impl GenerationClient for Synthetic {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        let h = digest_byte(prompt);
        if let Some(rest) = prompt.strip_prefix("Write a story where ") {
            let rest = rest.trim_end_matches(':');
            if let Some((a, phrase, b)) = happens(rest) {
                return Ok(format!("Late on Friday the {a} took place {phrase} the {b} was over."));
            }
            return Ok(format!("Everyone agrees that {rest}."));
        }
        if let Some(rest) = prompt.strip_prefix("Generate a paragraph where event ") {
            if h.is_multiple_of(4) && params.sample_index == 0 {
                return Ok("The weather was pleasant all week.".into());
            }
            let (a, phrase, b) = happens(rest.trim_end_matches(':')).unwrap_or(("it", "before", "that"));
            return Ok(format!("Reports say that {a} came {phrase} {b} last week."));
        }
        if let Some(rest) = prompt.strip_prefix("Generate a paragraph where the temporal relation of ") {
            let pair = rest.split(" cannot").next().unwrap_or(rest);
            let (a, b) = pair.split_once(" and ").unwrap_or((pair, pair));
            return Ok(format!("It is unclear whether {a} or {b} came first."));
        }
        if prompt.starts_with("Given the context:") {
            let letter = ["A", "B", "C", "D"][(h % 4) as usize];
            return Ok(match h % 3 {
                0 => format!(" {letter}"),
                1 => format!("Choice {letter}"),
                _ => format!("I think the answer is {letter}."),
            });
        }
        if prompt.starts_with("Determine the temporal order") {
            return Ok(["BEFORE", "AFTER", "EQUAL", "VAGUE"][(h % 4) as usize].into());
        }
        Ok("none".into())
    }

    fn generator_id(&self, _: &GenerationParams) -> String {
        "synthetic".into()
    }
}

const TAGS: [&str; 4] = ["VBD", "VB", "VBG", "VBN"];

/// Word spans (byte offsets) of alphanumeric runs.
fn words(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

/// Tag the first word starting with each payload event.
pub fn annotate(examples: &[AugmentedExample]) -> Vec<Annotation> {
    examples
        .iter()
        .map(|e| {
            let spans = words(&e.context);
            let events = e
                .payload
                .events()
                .into_iter()
                .filter_map(|term| {
                    let lower = term.to_lowercase();
                    spans
                        .iter()
                        .enumerate()
                        .find(|(_, (s, t))| e.context[*s..*t].to_lowercase().starts_with(&lower))
                        .map(|(idx, &(s, t))| {
                            let tag = TAGS[(digest_byte(&format!("{}|{term}", e.id)) % 4) as usize];
                            EventMention::new(&e.context[s..t], term, idx, tag).with_span(s, t)
                        })
                })
                .collect();
            Annotation {
                id: e.id.clone(),
                events,
            }
        })
        .collect()
}

/// Write `replay.jsonl` and `annotations.jsonl` for the pairwise fixture
/// into `out`, covering every prompt the CLI issues for it.
pub fn regenerate(out: &Path) {
    let base = fixtures().join("matres");
    let cfg = DatasetConfig::matres();
    let train = load_dataset(base.join("train.jsonl"), &cfg).unwrap().into_strict().unwrap();
    let dev = load_dataset(base.join("dev.jsonl"), &cfg).unwrap().into_strict().unwrap();
    let tables = build_tables(&train, &cfg, "train");
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache.jsonl");
    let client = CachingClient::with_file(Synthetic, &cache).unwrap();
    let params = GenerationParams::default();

    let options = AugmentOptions {
        mode: Mode::Cda,
        seed: SEED,
        ..Default::default()
    };
    let requests = plan_augmentation(&tables, &cfg, &options).unwrap();
    let (examples, failures) = generate(&requests, &client, &params, Mode::Cda, 1).unwrap();
    assert!(failures.is_empty());

    for mode in [IclMode::ZeroShot, IclMode::Cda, IclMode::Gda] {
        let options = IclOptions {
            mode,
            seed: SEED,
            ..Default::default()
        };
        run_icl_batch(&dev, &client, Template::MatresMcqa, &cfg, &options, 1).unwrap();
    }
    drop(client);

    let mut entries: BTreeMap<(String, String), _> = BTreeMap::new();
    for e in read_fixture(&cache).unwrap() {
        entries.insert((e.prompt_sha256.clone(), serde_json::to_string(&e.params).unwrap()), e);
    }
    let entries: Vec<_> = entries.into_values().collect();
    fs::create_dir_all(out).unwrap();
    write_fixture(&out.join("replay.jsonl"), &entries).unwrap();
    let mut ann = String::new();
    for a in annotate(&examples) {
        ann.push_str(&serde_json::to_string(&a).unwrap());
        ann.push('\n');
    }
    fs::write(out.join("annotations.jsonl"), ann).unwrap();
}
