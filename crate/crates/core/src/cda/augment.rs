//! Counterfactual data augmentation for fine-tuned models: prompts are
//! built for relations the training data under-represents for a key, a
//! generator writes contexts, and the results are filtered against the
//! tense and narrative tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::client::{complete_all, GenerationClient, GenerationParams};
use super::prompts::{derive_torque_qa, plm_aug_prompt, warmup_aug_prompt, warmup_question};
use crate::bias::{BiasTables, FeatureKey, NarrativeOrder};
use crate::config::{DatasetConfig, NarrativeRule};
use crate::conflict::{is_conflict, narrative_flag, Flag};
use crate::corpus::{AnnotatedInstance, EventMention, PairInstance, QuestionFrame, RcInstance};
use crate::error::{Error, Result};
use crate::relation::{BiasType, DatasetKind, RelationLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Only relations the key conflicts with.
    #[default]
    Cda,
    /// Every ordered relation, counterfactual or not.
    Gda,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cda => "cda",
            Mode::Gda => "gda",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cda" | "plm-cda" => Ok(Mode::Cda),
            "gda" | "plm-gda" => Ok(Mode::Gda),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// What a generated context is supposed to express.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    TorqueQa {
        question: String,
        answer_events: Vec<String>,
        /// Event the question is anchored on; absent for warm-up questions.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<String>,
        /// Relation of the anchor to every answer, or the warm-up status.
        relation: RelationLabel,
    },
    MatresLabel {
        e1: String,
        e2: String,
        relation: RelationLabel,
    },
}

impl Payload {
    /// Event terms that must appear in the generated context.
    pub fn events(&self) -> Vec<&str> {
        match self {
            Payload::TorqueQa {
                answer_events, anchor, ..
            } => anchor
                .iter()
                .map(String::as_str)
                .chain(answer_events.iter().map(String::as_str))
                .collect(),
            Payload::MatresLabel { e1, e2, .. } => vec![e1, e2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub bias_type: BiasType,
    /// Keys the example was generated for; warm-up examples target two.
    pub target_keys: Vec<String>,
    pub counterfactual_relation: RelationLabel,
    pub source_prompt: String,
    pub generator_id: String,
    pub mode: Mode,
}

/// A generation request before the generator has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRequest {
    pub id: String,
    pub prompt: String,
    pub payload: Payload,
    pub bias_type: BiasType,
    pub target_keys: Vec<String>,
    pub counterfactual_relation: RelationLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedExample {
    pub id: String,
    pub context: String,
    pub payload: Payload,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOptions {
    pub mode: Mode,
    pub seed: u64,
    /// Events per warm-up prompt.
    pub warmup_events: usize,
    /// Cap on the number of prompts, applied after ordering.
    pub max_prompts: Option<usize>,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Cda,
            seed: 0,
            warmup_events: 2,
            max_prompts: None,
        }
    }
}

/// Relations to generate for one key, in relation order.
fn targets(
    tables: &BiasTables,
    bias_type: BiasType,
    key: &FeatureKey,
    candidates: &[RelationLabel],
    config: &DatasetConfig,
    mode: Mode,
) -> Result<Vec<RelationLabel>> {
    let Some(table) = tables.get(bias_type) else {
        return Ok(Vec::new());
    };
    let mut conflicting = Vec::new();
    for &r in candidates {
        if is_conflict(table, key, r, config)? == Flag::Conflict {
            conflicting.push(r);
        }
    }
    Ok(match mode {
        Mode::Cda => conflicting,
        Mode::Gda if conflicting.is_empty() => Vec::new(),
        Mode::Gda => candidates.to_vec(),
    })
}

/// Build every generation request implied by the relation-prior tables.
pub fn plan_augmentation(
    tables: &BiasTables,
    config: &DatasetConfig,
    options: &AugmentOptions,
) -> Result<Vec<AugmentRequest>> {
    let mut planned: Vec<(String, Payload, BiasType, Vec<String>, RelationLabel)> = Vec::new();

    if let Some(table) = tables.get(BiasType::RelPrior) {
        let ordered: Vec<RelationLabel> = RelationLabel::ORDERED
            .into_iter()
            .filter(|r| table.relations.contains(r))
            .collect();
        for key in table.scores.keys() {
            let FeatureKey::RelPrior { lemma1, lemma2 } = key else {
                continue;
            };
            for r in targets(tables, BiasType::RelPrior, key, &ordered, config, options.mode)? {
                let (prompt, payload) = match config.kind {
                    // Keys are read as (anchor, answer) with the anchor's
                    // relation, so the answer happens inverse(r) the anchor.
                    DatasetKind::ReadingComprehension => {
                        let inv = r.inverse();
                        let qa = derive_torque_qa(lemma2, lemma1, inv)?;
                        (
                            plm_aug_prompt(lemma2, lemma1, inv)?,
                            Payload::TorqueQa {
                                question: qa.question,
                                answer_events: qa.answers,
                                anchor: Some(lemma1.clone()),
                                relation: r,
                            },
                        )
                    }
                    DatasetKind::Pairwise => (
                        plm_aug_prompt(lemma1, lemma2, r)?,
                        Payload::MatresLabel {
                            e1: lemma1.clone(),
                            e2: lemma2.clone(),
                            relation: r,
                        },
                    ),
                };
                planned.push((prompt, payload, BiasType::RelPrior, vec![key.to_string()], r));
            }
        }
    }

    if config.kind == DatasetKind::ReadingComprehension {
        if let Some(table) = tables.get(BiasType::RelPriorWarm) {
            let statuses: Vec<RelationLabel> = RelationLabel::STATUSES
                .into_iter()
                .filter(|r| table.relations.contains(r))
                .collect();
            let mut per_status: BTreeMap<RelationLabel, Vec<String>> = BTreeMap::new();
            for key in table.scores.keys() {
                let FeatureKey::RelPriorWarm { lemma } = key else {
                    continue;
                };
                for s in targets(tables, BiasType::RelPriorWarm, key, &statuses, config, options.mode)? {
                    per_status.entry(s).or_default().push(lemma.clone());
                }
            }
            let group = options.warmup_events.max(1);
            for (status, mut lemmas) in per_status {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                rng.set_stream(status as u64);
                lemmas.shuffle(&mut rng);
                for chunk in lemmas.chunks_exact(group) {
                    // The prompt names the first two events; larger groups
                    // list the rest in the answer set only.
                    let prompt = if chunk.len() >= 2 {
                        warmup_aug_prompt(&chunk[0], &chunk[1], status)?
                    } else {
                        warmup_aug_prompt(&chunk[0], &chunk[0], status)?
                    };
                    planned.push((
                        prompt,
                        Payload::TorqueQa {
                            question: warmup_question(status)?,
                            answer_events: chunk.to_vec(),
                            anchor: None,
                            relation: status,
                        },
                        BiasType::RelPriorWarm,
                        chunk.to_vec(),
                        status,
                    ));
                }
            }
        }
    }

    if let Some(max) = options.max_prompts {
        planned.truncate(max);
    }
    Ok(planned
        .into_iter()
        .enumerate()
        .map(|(i, (prompt, payload, bias_type, target_keys, r))| AugmentRequest {
            id: format!("aug-{i:06}"),
            prompt,
            payload,
            bias_type,
            target_keys,
            counterfactual_relation: r,
        })
        .collect())
}

/// A request that produced no context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub id: String,
    pub message: String,
}

/// Run the generator over planned requests. Failures are reported per
/// request rather than aborting the batch.
pub fn generate(
    requests: &[AugmentRequest],
    client: &dyn GenerationClient,
    params: &GenerationParams,
    mode: Mode,
    concurrency: usize,
) -> Result<(Vec<AugmentedExample>, Vec<GenerationFailure>)> {
    let batch = requests
        .iter()
        .map(|r| (r.id.clone(), r.prompt.clone(), params.clone()))
        .collect();
    let by_id: BTreeMap<&str, &AugmentRequest> = requests.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut examples = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in complete_all(&client, batch, concurrency)? {
        let req = by_id[id.as_str()];
        match outcome {
            Ok(text) => examples.push(AugmentedExample {
                id,
                context: text.trim().to_string(),
                payload: req.payload.clone(),
                provenance: Provenance {
                    bias_type: req.bias_type,
                    target_keys: req.target_keys.clone(),
                    counterfactual_relation: req.counterfactual_relation,
                    source_prompt: req.prompt.clone(),
                    generator_id: client.generator_id(params),
                    mode,
                },
            }),
            Err(e) => failures.push(GenerationFailure {
                id,
                message: e.to_string(),
            }),
        }
    }
    Ok((examples, failures))
}

/// Plan and generate in one step.
pub fn plm_augment(
    tables: &BiasTables,
    config: &DatasetConfig,
    options: &AugmentOptions,
    client: &dyn GenerationClient,
    params: &GenerationParams,
    concurrency: usize,
) -> Result<(Vec<AugmentedExample>, Vec<GenerationFailure>)> {
    let requests = plan_augmentation(tables, config, options)?;
    generate(&requests, client, params, options.mode, concurrency)
}

/// Event annotations of a generated context, produced by the same tagger
/// that annotated the training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub events: Vec<EventMention>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MissingEvent,
    Unannotated,
    TenseBiased,
    NarrativeBiased,
    LossFiltered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: RejectReason,
    pub detail: String,
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Case-insensitive match of `term` against consecutive context tokens,
/// each token allowed to extend the term's token (so "approve" matches
/// "approved").
pub fn mentions(context: &str, term: &str) -> bool {
    let ctx = tokens(context);
    let t = tokens(term);
    if t.is_empty() || t.len() > ctx.len() {
        return false;
    }
    (0..=ctx.len() - t.len()).any(|s| t.iter().zip(&ctx[s..]).all(|(a, b)| b.starts_with(a.as_str())))
}

fn find_event<'a>(annotation: &'a Annotation, term: &str) -> Option<&'a EventMention> {
    let lower = term.to_lowercase();
    annotation
        .events
        .iter()
        .find(|e| e.lemma.to_lowercase() == lower)
        .or_else(|| annotation.events.iter().find(|e| e.surface.to_lowercase().starts_with(&lower)))
}

/// A `NonConflict` verdict means the generated example agrees with the bias.
fn biased(tables: &BiasTables, key: &FeatureKey, r: RelationLabel, config: &DatasetConfig) -> Result<bool> {
    match tables.get(key.bias_type()) {
        Some(table) => Ok(is_conflict(table, key, r, config)? == Flag::NonConflict),
        None => Ok(false),
    }
}

fn check_pair(
    e1: &EventMention,
    e2: &EventMention,
    r: RelationLabel,
    tables: &BiasTables,
    config: &DatasetConfig,
) -> Result<Option<(RejectReason, String)>> {
    let tense = FeatureKey::Tense {
        pos1: e1.pos_tag.clone(),
        pos2: e2.pos_tag.clone(),
    };
    if e1.pos_tag != "UNK" && e2.pos_tag != "UNK" && biased(tables, &tense, r, config)? {
        return Ok(Some((RejectReason::TenseBiased, format!("{tense} -> {r}"))));
    }
    if config.narrative_relations.contains(&r) {
        if let Some(order) = NarrativeOrder::of(e1.token_index, e2.token_index) {
            let key = FeatureKey::Narrative { order };
            let hit = match config.narrative_rule {
                NarrativeRule::OrderMismatch => narrative_flag(order, r) == Flag::NonConflict,
                NarrativeRule::Threshold => biased(tables, &key, r, config)?,
            };
            if hit {
                return Ok(Some((RejectReason::NarrativeBiased, format!("{key} -> {r}"))));
            }
        }
    }
    Ok(None)
}

/// Why an example is rejected, or `None` if it is kept.
fn judge(
    example: &AugmentedExample,
    annotation: Option<&Annotation>,
    tables: &BiasTables,
    config: &DatasetConfig,
) -> Result<Option<(RejectReason, String)>> {
    if let Some(missing) = example.payload.events().into_iter().find(|t| !mentions(&example.context, t)) {
        return Ok(Some((RejectReason::MissingEvent, missing.to_string())));
    }
    let Some(annotation) = annotation else {
        return Ok(Some((RejectReason::Unannotated, "no annotation record".into())));
    };
    let mut resolved = Vec::new();
    for term in example.payload.events() {
        match find_event(annotation, term) {
            Some(e) => resolved.push(e),
            None => return Ok(Some((RejectReason::Unannotated, format!("no annotated event for `{term}`")))),
        }
    }
    match &example.payload {
        Payload::MatresLabel { relation, .. } => check_pair(resolved[0], resolved[1], *relation, tables, config),
        Payload::TorqueQa {
            anchor: Some(_),
            relation,
            ..
        } => {
            for answer in &resolved[1..] {
                if let Some(hit) = check_pair(resolved[0], answer, *relation, tables, config)? {
                    return Ok(Some(hit));
                }
            }
            Ok(None)
        }
        Payload::TorqueQa {
            anchor: None,
            relation,
            ..
        } => {
            for event in &resolved {
                if event.pos_tag == "UNK" {
                    continue;
                }
                let key = FeatureKey::TenseWarm {
                    pos: event.pos_tag.clone(),
                };
                if biased(tables, &key, *relation, config)? {
                    return Ok(Some((RejectReason::TenseBiased, format!("{key} -> {relation}"))));
                }
            }
            Ok(None)
        }
    }
}

/// External scorer assigning a loss to each example; lower is better.
pub trait LossScorer {
    fn score(&self, examples: &[AugmentedExample]) -> Result<BTreeMap<String, f64>>;
}

/// Runs an executable that reads example JSONL on stdin and prints
/// `{"id": .., "loss": ..}` lines on stdout.
#[derive(Debug, Clone)]
pub struct CommandScorer {
    pub program: PathBuf,
    pub args: Vec<String>,
}

#[derive(Deserialize)]
struct LossLine {
    id: String,
    loss: f64,
}

impl LossScorer for CommandScorer {
    fn score(&self, examples: &[AugmentedExample]) -> Result<BTreeMap<String, f64>> {
        let mut input = String::new();
        for e in examples {
            input.push_str(&serde_json::to_string(e)?);
            input.push('\n');
        }
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(&self.program, e))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let output = child.wait_with_output().map_err(|e| Error::io(&self.program, e))?;
        // A scorer may exit without reading all of its input.
        let _ = writer.join();
        if !output.status.success() {
            return Err(Error::Config(format!(
                "loss scorer {} exited with {}",
                self.program.display(),
                output.status
            )));
        }
        let mut out = BTreeMap::new();
        for (n, line) in String::from_utf8_lossy(&output.stdout).lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LossLine = serde_json::from_str(line).map_err(|e| Error::Record {
                line: n + 1,
                field: "$".into(),
                message: e.to_string(),
            })?;
            out.insert(parsed.id, parsed.loss);
        }
        Ok(out)
    }
}

/// Keep the `ceil(keep_fraction * n)` lowest-loss examples, ties broken by
/// id. A fraction of 1 keeps everything without calling the scorer.
pub fn loss_filter(
    examples: Vec<AugmentedExample>,
    scorer: &dyn LossScorer,
    keep_fraction: f64,
) -> Result<(Vec<AugmentedExample>, Vec<Rejection>)> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::Config(format!("keep fraction {keep_fraction} is outside [0, 1]")));
    }
    if keep_fraction >= 1.0 || examples.is_empty() {
        return Ok((examples, Vec::new()));
    }
    let losses = scorer.score(&examples)?;
    if let Some(e) = examples.iter().find(|e| !losses.contains_key(&e.id)) {
        return Err(Error::Config(format!("loss scorer returned no loss for `{}`", e.id)));
    }
    let keep = (keep_fraction * examples.len() as f64).ceil() as usize;
    let mut order: Vec<&AugmentedExample> = examples.iter().collect();
    order.sort_by(|a, b| losses[&a.id].total_cmp(&losses[&b.id]).then_with(|| a.id.cmp(&b.id)));
    let kept_ids: BTreeSet<&str> = order[..keep].iter().map(|e| e.id.as_str()).collect();
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for e in &examples {
        if kept_ids.contains(e.id.as_str()) {
            kept.push(e.clone());
        } else {
            rejected.push(Rejection {
                id: e.id.clone(),
                reason: RejectReason::LossFiltered,
                detail: format!("loss {}", losses[&e.id]),
            });
        }
    }
    Ok((kept, rejected))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<AugmentedExample>,
    pub rejected: Vec<Rejection>,
}

/// Drop examples that miss an event or that agree with the tense or
/// narrative bias they were meant to counter. Output order follows input.
pub fn filter_augmented(
    examples: &[AugmentedExample],
    annotations: &BTreeMap<String, Annotation>,
    tables: &BiasTables,
    config: &DatasetConfig,
) -> Result<FilterOutcome> {
    let mut out = FilterOutcome::default();
    for example in examples {
        match judge(example, annotations.get(&example.id), tables, config)? {
            None => out.kept.push(example.clone()),
            Some((reason, detail)) => out.rejected.push(Rejection {
                id: example.id.clone(),
                reason,
                detail,
            }),
        }
    }
    Ok(out)
}

/// Convert a kept example into a canonical corpus record using its
/// annotation. Returns `None` if an event cannot be resolved.
pub fn to_canonical(example: &AugmentedExample, annotation: &Annotation) -> Option<AnnotatedInstance> {
    let events: Vec<&EventMention> = example
        .payload
        .events()
        .into_iter()
        .map(|t| find_event(annotation, t))
        .collect::<Option<_>>()?;
    match &example.payload {
        Payload::MatresLabel { relation, .. } => Some(AnnotatedInstance::Pair(PairInstance {
            id: example.id.clone(),
            context: example.context.clone(),
            e1: events[0].clone(),
            e2: events[1].clone(),
            gold: *relation,
            dep_label: None,
            extra: Default::default(),
        })),
        Payload::TorqueQa { question, anchor, .. } => {
            let answers = if anchor.is_some() { &events[1..] } else { &events[..] };
            let gold_answer_indices = annotation
                .events
                .iter()
                .enumerate()
                .filter(|(_, c)| answers.iter().any(|a| std::ptr::eq(*a, *c)))
                .map(|(i, _)| i)
                .collect();
            Some(AnnotatedInstance::Rc(RcInstance {
                id: example.id.clone(),
                passage: example.context.clone(),
                question: question.clone(),
                candidates: annotation.events.clone(),
                gold_answer_indices,
                dependencies: Vec::new(),
                frame: QuestionFrame::default(),
                extra: Default::default(),
            }))
        }
    }
}
