//! JSON Lines loading, validation and serialization of canonical records.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::types::{AnnotatedInstance, EventMention, PairInstance, RcInstance};
use crate::config::DatasetConfig;
use crate::error::{Error, Result};
use crate::relation::DatasetKind;

const PENN_TAGS: &[&str] = &[
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS",
    "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG",
    "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", "UNK",
];

/// A record that failed to load or validate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    /// 1-based line number in the input file.
    pub line: usize,
    /// Dotted path of the offending field, `$` for the whole record.
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.field, self.message)
    }
}

impl From<RecordError> for Error {
    fn from(e: RecordError) -> Self {
        Error::Record {
            line: e.line,
            field: e.field,
            message: e.message,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOutcome {
    pub instances: Vec<AnnotatedInstance>,
    pub errors: Vec<RecordError>,
}

impl LoadOutcome {
    /// Fail on the first invalid record.
    pub fn into_strict(self) -> Result<Vec<AnnotatedInstance>> {
        match self.errors.into_iter().next() {
            Some(e) => Err(e.into()),
            None => Ok(self.instances),
        }
    }
}

/// Load a canonical JSONL file. Valid records come back in file order;
/// every invalid one is reported with its line number.
pub fn load_dataset(path: impl AsRef<Path>, config: &DatasetConfig) -> Result<LoadOutcome> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), config).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_dataset(reader: impl BufRead, config: &DatasetConfig) -> Result<LoadOutcome> {
    let mut out = LoadOutcome::default();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, config) {
            Ok(instance) => {
                if !seen.insert(instance.id().to_string()) {
                    out.errors.push(RecordError {
                        line: line_no,
                        field: "id".into(),
                        message: format!("duplicate id `{}`", instance.id()),
                    });
                    continue;
                }
                out.instances.push(instance);
            }
            Err((field, message)) => out.errors.push(RecordError {
                line: line_no,
                field,
                message,
            }),
        }
    }
    Ok(out)
}

type FieldError = (String, String);

fn parse_record(line: &str, config: &DatasetConfig) -> std::result::Result<AnnotatedInstance, FieldError> {
    let value: Value = serde_json::from_str(line).map_err(|e| ("$".to_string(), e.to_string()))?;
    match config.kind {
        DatasetKind::Pairwise => {
            let pair: PairInstance = typed(value)?;
            validate_pair(&pair, config)?;
            Ok(pair.into())
        }
        DatasetKind::ReadingComprehension => {
            let mut rc: RcInstance = typed(value)?;
            validate_rc(&rc)?;
            rc.frame = config.question_parser.parse(&rc.question, &rc.candidates);
            Ok(rc.into())
        }
    }
}

fn typed<T: DeserializeOwned>(value: Value) -> std::result::Result<T, FieldError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "$".to_string() } else { path };
        (field, e.into_inner().to_string())
    })
}

fn check(cond: bool, field: impl Into<String>, message: impl Into<String>) -> std::result::Result<(), FieldError> {
    if cond {
        Ok(())
    } else {
        Err((field.into(), message.into()))
    }
}

fn validate_mention(m: &EventMention, text: &str, prefix: &str) -> std::result::Result<(), FieldError> {
    let f = |name: &str| format!("{prefix}.{name}");
    check(!m.surface.is_empty(), f("surface"), "empty surface")?;
    check(
        !m.lemma.is_empty() && !m.lemma.contains(['|', '\t', '\n']),
        f("lemma"),
        "lemma must be nonempty and free of `|`, tabs and newlines",
    )?;
    check(
        m.char_end > m.char_start,
        f("char_end"),
        format!("span end {} is not after start {}", m.char_end, m.char_start),
    )?;
    check(
        m.char_end <= text.len(),
        f("char_end"),
        format!("span end {} is beyond the text length {}", m.char_end, text.len()),
    )?;
    check(
        text.is_char_boundary(m.char_start) && text.is_char_boundary(m.char_end),
        f("char_start"),
        "span does not fall on character boundaries",
    )?;
    let covered = &text[m.char_start..m.char_end];
    check(
        covered == m.surface,
        f("surface"),
        format!("span covers `{covered}` but surface is `{}`", m.surface),
    )?;
    check(
        PENN_TAGS.contains(&m.pos_tag.as_str()),
        f("pos_tag"),
        format!("`{}` is not a Penn Treebank tag", m.pos_tag),
    )
}

fn validate_pair(p: &PairInstance, config: &DatasetConfig) -> std::result::Result<(), FieldError> {
    check(!p.id.is_empty(), "id", "empty id")?;
    validate_mention(&p.e1, &p.context, "e1")?;
    validate_mention(&p.e2, &p.context, "e2")?;
    check(
        config.relation_set.contains(&p.gold),
        "gold",
        format!("relation `{}` is not in the configured relation set", p.gold),
    )?;
    if let Some(d) = &p.dep_label {
        check(
            !d.is_empty() && !d.contains(['\t', '\n']),
            "dep_label",
            "dependency label must be nonempty and free of tabs",
        )?;
    }
    Ok(())
}

fn validate_rc(q: &RcInstance) -> std::result::Result<(), FieldError> {
    check(!q.id.is_empty(), "id", "empty id")?;
    check(!q.question.trim().is_empty(), "question", "empty question")?;
    for (i, c) in q.candidates.iter().enumerate() {
        validate_mention(c, &q.passage, &format!("candidates[{i}]"))?;
    }
    let mut seen = HashSet::new();
    for (j, &idx) in q.gold_answer_indices.iter().enumerate() {
        let field = format!("gold_answer_indices[{j}]");
        check(
            idx < q.candidates.len(),
            field.clone(),
            format!("index {idx} is out of range for {} candidates", q.candidates.len()),
        )?;
        check(seen.insert(idx), field, format!("index {idx} repeated"))?;
    }
    for (j, d) in q.dependencies.iter().enumerate() {
        check(
            d.head < q.candidates.len() && d.dependent < q.candidates.len(),
            format!("dependencies[{j}]"),
            "edge endpoint out of range",
        )?;
        check(
            !d.label.is_empty() && !d.label.contains(['\t', '\n']),
            format!("dependencies[{j}].label"),
            "dependency label must be nonempty and free of tabs",
        )?;
    }
    Ok(())
}

/// Write instances as canonical JSONL, one record per line.
pub fn write_dataset<'a>(
    mut writer: impl Write,
    instances: impl IntoIterator<Item = &'a AnnotatedInstance>,
) -> Result<()> {
    for instance in instances {
        let line = serde_json::to_string(instance)?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}
