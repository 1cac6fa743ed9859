//! `tkc`: bias tables, conflict subsets, counterfactual augmentation,
//! in-context learning and evaluation from one configuration file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{Common, Settings};

#[derive(Parser)]
#[command(name = "tkc", version, about = "Temporal knowledge-conflict diagnostics for event relation datasets")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate canonical JSONL splits and report every invalid record.
    IngestValidate,
    /// Count feature/relation co-occurrences on a split (default `train`).
    Bias,
    /// Flag an evaluation split (default `dev`) and write conflict subsets.
    Detect {
        /// Bias table TSV; defaults to `<out>/bias/tables.tsv`.
        #[arg(long, value_name = "PATH")]
        tables: Option<PathBuf>,
    },
    /// Conflict subset sizes under alternative thresholds.
    Sweep {
        /// Bias table TSV; defaults to `<out>/bias/tables.tsv`.
        #[arg(long, value_name = "PATH")]
        tables: Option<PathBuf>,
    },
    /// Generate counterfactual training data (modes `cda`, `gda`).
    Augment {
        /// Bias table TSV; defaults to `<out>/bias/tables.tsv`.
        #[arg(long, value_name = "PATH")]
        tables: Option<PathBuf>,
        /// JSONL annotations of generated contexts; enables filtering.
        #[arg(long, value_name = "PATH")]
        annotations: Option<PathBuf>,
        /// Replay fixture for `--backend replay`.
        #[arg(long, value_name = "PATH")]
        fixture: Option<PathBuf>,
        /// Fraction kept by the loss scorer, in [0, 1].
        #[arg(long)]
        keep_fraction: Option<f64>,
    },
    /// Render prompts and, with a backend, predict with generated demonstrations.
    Icl {
        /// Replay fixture for `--backend replay`.
        #[arg(long, value_name = "PATH")]
        fixture: Option<PathBuf>,
    },
    /// Score predictions on the evaluation split and its conflict subsets.
    Evaluate {
        /// Prediction JSONL; defaults to `<out>/icl/predictions.jsonl`.
        #[arg(long, value_name = "PATH")]
        predictions: Option<PathBuf>,
        /// Second system for the paired randomization test.
        #[arg(long, value_name = "PATH")]
        predictions_b: Option<PathBuf>,
        /// Verdict JSONL; defaults to `<out>/detect/verdicts.jsonl` when present.
        #[arg(long, value_name = "PATH")]
        verdicts: Option<PathBuf>,
        /// Randomization test iterations (default 10000).
        #[arg(long)]
        iterations: Option<usize>,
        /// Also report pooled binary F1 for answer-set tasks.
        #[arg(long)]
        binary_f1: bool,
    },
    /// Render a metrics report as Markdown.
    Report {
        /// Report JSON; defaults to `<out>/evaluate/report.json`.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::IngestValidate => "ingest-validate",
            Cmd::Bias => "bias",
            Cmd::Detect { .. } => "detect",
            Cmd::Sweep { .. } => "sweep",
            Cmd::Augment { .. } => "augment",
            Cmd::Icl { .. } => "icl",
            Cmd::Evaluate { .. } => "evaluate",
            Cmd::Report { .. } => "report",
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let s = Settings::resolve(&cli.common)?;
    match &cli.command {
        Cmd::IngestValidate => commands::ingest_validate(&s),
        Cmd::Bias => commands::bias(&s),
        Cmd::Detect { tables } => commands::detect(&s, tables.as_deref()),
        Cmd::Sweep { tables } => commands::sweep(&s, tables.as_deref()),
        Cmd::Augment {
            tables,
            annotations,
            fixture,
            keep_fraction,
        } => commands::augment(
            &s,
            commands::AugmentArgs {
                tables: tables.as_deref(),
                annotations: annotations.as_deref(),
                fixture: fixture.as_deref(),
                keep_fraction: *keep_fraction,
            },
        ),
        Cmd::Icl { fixture } => commands::icl(&s, fixture.as_deref()),
        Cmd::Evaluate {
            predictions,
            predictions_b,
            verdicts,
            iterations,
            binary_f1,
        } => commands::evaluate(
            &s,
            commands::EvaluateArgs {
                predictions: predictions.as_deref(),
                predictions_b: predictions_b.as_deref(),
                verdicts: verdicts.as_deref(),
                iterations: *iterations,
                binary_f1: *binary_f1,
            },
        ),
        Cmd::Report { input } => commands::report(&s, input.as_deref()),
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(core) = e.downcast_ref::<tkc_core::Error>() {
        return core.kind();
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    if e.downcast_ref::<toml::de::Error>().is_some() {
        return "config";
    }
    if e.downcast_ref::<serde_json::Error>().is_some() {
        return "json";
    }
    "error"
}

/// The context chain, skipping causes already quoted by their wrapper.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn fail(message: String, kind: &str, command: &str) -> ExitCode {
    eprintln!("{}", json!({"error": message, "kind": kind, "command": command}));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ").to_string();
            return fail(first, "usage", "tkc");
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(message(&e), error_kind(&e), cli.command.name()),
    }
}
