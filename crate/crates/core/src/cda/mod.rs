//! Prompt construction, generation backends, counterfactual augmentation
//! and in-context learning with generated demonstrations.

pub mod augment;
pub mod client;
pub mod icl;
pub mod parse;
pub mod prompts;

pub use augment::{
    filter_augmented, generate, loss_filter, mentions, plan_augmentation, plm_augment, to_canonical, Annotation,
    AugmentOptions, AugmentRequest, AugmentedExample, CommandScorer, FilterOutcome, GenerationFailure, LossScorer,
    Mode, Payload, Provenance, RejectReason, Rejection,
};
pub use client::{
    complete_all, prompt_sha256, read_fixture, write_fixture, CachingClient, Endpoint, FixtureEntry,
    GenerationClient, GenerationParams, HttpClient, HttpSettings, ReplayClient,
};
pub use icl::{
    assemble_icl_prompt, build_counterfactual_demos, demo_relations, llm_predict, run_icl, run_icl_batch, Demo,
    IclMode, IclOptions, IclRecord,
};
pub use parse::{parse_llm_answer, ParseStatus, Prediction};
pub use prompts::{
    answer_text, derive_torque_qa, llm_demo_prompt, plm_aug_prompt, render, render_answered, warmup_aug_prompt,
    warmup_question, TaskItem, Template, TorqueQa,
};
