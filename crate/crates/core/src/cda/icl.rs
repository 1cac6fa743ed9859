//! In-context learning with generated demonstrations. The model first
//! answers zero-shot; demonstrations are then generated for the relations
//! (or answers) it did not predict and prepended to the task prompt.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::mentions;
use super::client::{prompt_sha256, GenerationClient, GenerationParams};
use super::parse::{parse_llm_answer, Prediction};
use super::prompts::{llm_demo_prompt, plm_aug_prompt, render, render_answered, warmup_aug_prompt, TaskItem, Template};
use crate::config::DatasetConfig;
use crate::corpus::{AnnotatedInstance, QuestionFrame, RcInstance};
use crate::error::{Error, Result};
use crate::eval::Answer;
use crate::relation::RelationLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IclMode {
    ZeroShot,
    /// Demonstrations avoid the zero-shot answer.
    #[default]
    Cda,
    /// Demonstrations cover every relation regardless of the zero-shot answer.
    Gda,
}

impl IclMode {
    pub fn as_str(self) -> &'static str {
        match self {
            IclMode::ZeroShot => "zero_shot",
            IclMode::Cda => "cda",
            IclMode::Gda => "gda",
        }
    }
}

impl fmt::Display for IclMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IclMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "zero_shot" | "zeroshot" | "none" => Ok(IclMode::ZeroShot),
            "cda" => Ok(IclMode::Cda),
            "gda" => Ok(IclMode::Gda),
            other => Err(Error::Config(format!("unknown in-context mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclOptions {
    pub mode: IclMode,
    pub seed: u64,
    /// Answer events per demonstration for questions anchored on an event.
    pub pairwise_answers: usize,
    /// Answer events per demonstration for warm-up questions.
    pub warmup_answers: usize,
    pub params: GenerationParams,
}

impl Default for IclOptions {
    fn default() -> Self {
        Self {
            mode: IclMode::Cda,
            seed: 0,
            pairwise_answers: 1,
            warmup_answers: 2,
            params: GenerationParams::default(),
        }
    }
}

/// A generated demonstration for a target instance. It reuses the target's
/// events and question; only the context and the answer differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<RelationLabel>,
    pub generation_prompt: String,
    pub context: String,
    pub answer: Answer,
}

fn with_context<'a>(item: &TaskItem<'a>, context: &'a str) -> TaskItem<'a> {
    match item {
        TaskItem::Pair { e1, e2, .. } => TaskItem::Pair { context, e1, e2 },
        TaskItem::Rc { question, events, .. } => TaskItem::Rc {
            context,
            question,
            events: events.clone(),
        },
    }
}

fn generation_error(id: &str, e: Error) -> Error {
    match e {
        Error::Generation { .. } => e,
        other => Error::Generation {
            id: id.to_string(),
            message: other.to_string(),
        },
    }
}

/// Zero-shot prediction.
pub fn llm_predict(
    instance: &AnnotatedInstance,
    client: &dyn GenerationClient,
    template: Template,
    params: &GenerationParams,
) -> Result<Prediction> {
    let item = TaskItem::from_instance(instance);
    let prompt = render(template, &item)?;
    let raw = client
        .complete(&prompt, params)
        .map_err(|e| generation_error(instance.id(), e))?;
    Ok(parse_llm_answer(&raw, instance.id(), &item, template))
}

/// Relations demonstrated for a pairwise instance, in fixed relation order.
pub fn demo_relations(relation_set: &[RelationLabel], predicted: RelationLabel, mode: IclMode) -> Vec<RelationLabel> {
    let ordered = RelationLabel::PAIRWISE
        .into_iter()
        .filter(|r| relation_set.contains(r));
    match mode {
        IclMode::ZeroShot => Vec::new(),
        IclMode::Cda => ordered.filter(|r| *r != predicted).collect(),
        IclMode::Gda => ordered.collect(),
    }
}

/// Per-instance random stream so results do not depend on batch order.
fn instance_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let digest = prompt_sha256(id);
    let stream = u64::from_str_radix(&digest[..16], 16).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate a context that mentions every required term, retrying once with
/// a fresh sample.
fn generate_checked(
    client: &dyn GenerationClient,
    id: &str,
    prompt: &str,
    required: &[&str],
    params: &GenerationParams,
    log: &mut Vec<String>,
) -> Result<Option<String>> {
    for attempt in 0..2 {
        let p = params.with_sample(params.sample_index + attempt);
        let text = client.complete(prompt, &p).map_err(|e| generation_error(id, e))?;
        let text = text.trim().to_string();
        match required.iter().find(|t| !mentions(&text, t)) {
            None => return Ok(Some(text)),
            Some(missing) if attempt == 0 => {
                log.push(format!("demo for `{prompt}` lacks `{missing}`; regenerating"));
            }
            Some(missing) => {
                log.push(format!("demo for `{prompt}` lacks `{missing}` again; dropped"));
            }
        }
    }
    Ok(None)
}

fn rc_demos(
    q: &RcInstance,
    predicted: &BTreeSet<usize>,
    client: &dyn GenerationClient,
    options: &IclOptions,
    log: &mut Vec<String>,
) -> Result<Vec<Demo>> {
    let exclude_predicted = options.mode == IclMode::Cda;
    let (anchor, count) = match &q.frame {
        QuestionFrame::Pairwise { anchor_index, .. } => (Some(*anchor_index), options.pairwise_answers),
        QuestionFrame::WarmUp { .. } => (None, options.warmup_answers),
        QuestionFrame::Unparsed { reason } => {
            log.push(format!("question not parsed ({}); no demos", reason.as_str()));
            return Ok(Vec::new());
        }
    };
    let pool: Vec<usize> = (0..q.candidates.len())
        .filter(|i| Some(*i) != anchor)
        .filter(|i| !(exclude_predicted && predicted.contains(i)))
        .collect();
    let needed = match q.frame {
        QuestionFrame::WarmUp { .. } => count.max(2),
        _ => count.max(1),
    };
    if pool.len() < needed {
        log.push(format!(
            "only {} candidate events left to sample, {needed} needed; no demos",
            pool.len()
        ));
        return Ok(Vec::new());
    }
    let mut rng = instance_rng(options.seed, &q.id);
    let mut chosen: Vec<usize> = sample(&mut rng, pool.len(), needed).into_iter().map(|i| pool[i]).collect();
    chosen.sort_unstable();
    let surfaces: Vec<&str> = chosen.iter().map(|&i| q.candidates[i].surface.as_str()).collect();
    let (prompt, required): (String, Vec<&str>) = match &q.frame {
        QuestionFrame::Pairwise {
            anchor, anchor_relation, ..
        } => {
            // Each answer stands in the inverse relation to the anchor.
            let inv = anchor_relation.inverse();
            let answers = surfaces.join(" and ");
            let mut req = surfaces.clone();
            req.push(&anchor.surface);
            (plm_aug_prompt(&answers, &anchor.surface, inv)?, req)
        }
        QuestionFrame::WarmUp { status } => (warmup_aug_prompt(surfaces[0], surfaces[1], *status)?, surfaces.clone()),
        QuestionFrame::Unparsed { .. } => unreachable!("handled above"),
    };
    Ok(
        generate_checked(client, &q.id, &prompt, &required, &options.params, log)?
            .map(|context| Demo {
                relation: None,
                generation_prompt: prompt,
                context,
                answer: Answer::Set(chosen.into_iter().collect()),
            })
            .into_iter()
            .collect(),
    )
}

/// Demonstrations for one instance given its zero-shot prediction.
pub fn build_counterfactual_demos(
    instance: &AnnotatedInstance,
    prediction: &Prediction,
    client: &dyn GenerationClient,
    config: &DatasetConfig,
    options: &IclOptions,
) -> Result<(Vec<Demo>, Vec<String>)> {
    let mut log = Vec::new();
    if options.mode == IclMode::ZeroShot {
        return Ok((Vec::new(), log));
    }
    let demos = match instance {
        AnnotatedInstance::Pair(p) => {
            let predicted = prediction.relation.unwrap_or(RelationLabel::Vague);
            let mut demos = Vec::new();
            for r in demo_relations(&config.relation_set, predicted, options.mode) {
                let prompt = llm_demo_prompt(&p.e1.surface, &p.e2.surface, r)?;
                let required = [p.e1.surface.as_str(), p.e2.surface.as_str()];
                if let Some(context) = generate_checked(client, &p.id, &prompt, &required, &options.params, &mut log)? {
                    demos.push(Demo {
                        relation: Some(r),
                        generation_prompt: prompt,
                        context,
                        answer: Answer::Relation(r),
                    });
                }
            }
            demos
        }
        AnnotatedInstance::Rc(q) => {
            let predicted: BTreeSet<usize> = prediction.answer_indices.iter().flatten().copied().collect();
            rc_demos(q, &predicted, client, options, &mut log)?
        }
    };
    Ok((demos, log))
}

/// Demonstrations with their answers, then the unanswered target, separated
/// by blank lines.
pub fn assemble_icl_prompt(demos: &[Demo], instance: &AnnotatedInstance, template: Template) -> Result<String> {
    let item = TaskItem::from_instance(instance);
    let mut blocks = Vec::with_capacity(demos.len() + 1);
    for demo in demos {
        blocks.push(render_answered(template, &with_context(&item, &demo.context), &demo.answer)?);
    }
    blocks.push(render(template, &item)?);
    Ok(blocks.join("\n\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclRecord {
    pub id: String,
    pub template: Template,
    pub mode: IclMode,
    pub zero_shot: Prediction,
    pub demos: Vec<Demo>,
    pub prompt: String,
    pub prediction: Prediction,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log: Vec<String>,
}

/// Zero-shot prediction, demonstration generation and final prediction for
/// one instance.
pub fn run_icl(
    instance: &AnnotatedInstance,
    client: &dyn GenerationClient,
    template: Template,
    config: &DatasetConfig,
    options: &IclOptions,
) -> Result<IclRecord> {
    let zero_shot = llm_predict(instance, client, template, &options.params)?;
    let (demos, log) = build_counterfactual_demos(instance, &zero_shot, client, config, options)?;
    let prompt = assemble_icl_prompt(&demos, instance, template)?;
    let prediction = if demos.is_empty() {
        zero_shot.clone()
    } else {
        let raw = client
            .complete(&prompt, &options.params)
            .map_err(|e| generation_error(instance.id(), e))?;
        parse_llm_answer(&raw, instance.id(), &TaskItem::from_instance(instance), template)
    };
    Ok(IclRecord {
        id: instance.id().to_string(),
        template,
        mode: options.mode,
        zero_shot,
        demos,
        prompt,
        prediction,
        log,
    })
}

/// `run_icl` over many instances on at most `concurrency` threads. Records
/// come back sorted by id.
pub fn run_icl_batch(
    instances: &[AnnotatedInstance],
    client: &dyn GenerationClient,
    template: Template,
    config: &DatasetConfig,
    options: &IclOptions,
    concurrency: usize,
) -> Result<Vec<IclRecord>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut records = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| run_icl(inst, client, template, config, options))
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}
