//! Run configuration: one TOML file plus command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::Deserialize;
use tkc_core::cda::{GenerationParams, HttpSettings, IclMode, Mode, Template};
use tkc_core::conflict::SweepPoint;
use tkc_core::{BiasType, DatasetConfig, NarrativeRule, RelationLabel, Thresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// OpenAI-compatible HTTP endpoint; the key is read from the environment.
    Http,
    /// Responses served from a fixture file keyed by prompt hash.
    Replay,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// `matres` or `torque`.
    pub dataset: Option<String>,
    pub dataset_overrides: DatasetOverrides,
    /// Split name to canonical JSONL path.
    pub splits: BTreeMap<String, PathBuf>,
    pub bias_types: Option<Vec<String>>,
    /// Same syntax as `--thresholds`.
    pub thresholds: Option<String>,
    pub bias_tables: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub template: Option<String>,
    pub mode: Option<String>,
    pub generation: GenerationSection,
    pub augment: AugmentSection,
    pub icl: IclSection,
    pub evaluate: EvaluateSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOverrides {
    pub relation_set: Option<Vec<RelationLabel>>,
    pub marginal_freqs: Option<BTreeMap<RelationLabel, f64>>,
    pub narrative_relations: Option<Vec<RelationLabel>>,
    pub narrative_rule: Option<NarrativeRule>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub backend: Option<Backend>,
    pub fixture: Option<PathBuf>,
    pub concurrency: usize,
    pub params: GenerationParams,
    pub http: HttpSettings,
}

impl Default for GenerationSection {
    fn default() -> Self {
        Self {
            backend: None,
            fixture: None,
            concurrency: 4,
            params: GenerationParams::default(),
            http: HttpSettings::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub annotations: Option<PathBuf>,
    pub keep_fraction: f64,
    /// Program and arguments of the loss scorer.
    pub loss_scorer: Option<Vec<String>>,
    pub max_prompts: Option<usize>,
    pub warmup_events: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            annotations: None,
            keep_fraction: 1.0,
            loss_scorer: None,
            max_prompts: None,
            warmup_events: 2,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IclSection {
    pub pairwise_answers: usize,
    pub warmup_answers: usize,
}

impl Default for IclSection {
    fn default() -> Self {
        Self {
            pairwise_answers: 1,
            warmup_answers: 2,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub predictions: Option<PathBuf>,
    pub predictions_b: Option<PathBuf>,
    pub verdicts: Option<PathBuf>,
    pub binary_f1: bool,
    pub iterations: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            predictions: None,
            predictions_b: None,
            verdicts: None,
            binary_f1: false,
            iterations: 10_000,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub points: Vec<SweepPointSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepPointSpec {
    pub name: String,
    pub thresholds: Option<String>,
    pub upper_bound: Vec<RelationLabel>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Paths in the file are relative to the file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.splits.values_mut().for_each(fix);
        for p in [
            self.bias_tables.as_mut(),
            self.out.as_mut(),
            self.generation.fixture.as_mut(),
            self.augment.annotations.as_mut(),
            self.evaluate.predictions.as_mut(),
            self.evaluate.predictions_b.as_mut(),
            self.evaluate.verdicts.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

/// Flags shared by every subcommand. Flags win over the config file.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Dataset preset: `matres` (pairwise) or `torque` (reading comprehension).
    #[arg(long, global = true, value_name = "NAME")]
    pub dataset: Option<String>,
    /// Split name from the config's `[splits]` table, or a JSONL path.
    #[arg(long, global = true, value_name = "NAME|PATH")]
    pub split: Option<String>,
    /// Comma-separated bias types, e.g. `tense,narrative`.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    pub bias_types: Option<Vec<String>>,
    /// Threshold overrides, e.g. `tense:before=0.2,*:equal=0.05`.
    #[arg(long, global = true, value_name = "SPEC")]
    pub thresholds: Option<String>,
    /// Generation backend.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<Backend>,
    /// Task template: torque_v1, torque_v2, matres_mcqa, matres_t2, matres_t3.
    #[arg(long, global = true, value_name = "ID")]
    pub template: Option<String>,
    /// `cda` or `gda`; `icl` also accepts `zero-shot`.
    #[arg(long, global = true, value_name = "MODE")]
    pub mode: Option<String>,
    /// Seed for every sampling step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Fully merged settings for one invocation.
pub struct Settings {
    pub file: FileConfig,
    pub dataset: DatasetConfig,
    pub bias_types: Vec<BiasType>,
    pub split: Option<String>,
    pub backend: Option<Backend>,
    pub template: Option<String>,
    pub mode: Option<String>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Settings {
    pub fn resolve(common: &Common) -> Result<Self> {
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let preset = common
            .dataset
            .clone()
            .or_else(|| file.dataset.clone())
            .unwrap_or_else(|| "matres".into());
        let mut dataset = DatasetConfig::preset(&preset)?;
        let o = &file.dataset_overrides;
        if let Some(r) = &o.relation_set {
            dataset.relation_set = r.clone();
        }
        if let Some(m) = &o.marginal_freqs {
            dataset.marginal_freqs = m.clone();
        }
        if let Some(n) = &o.narrative_relations {
            dataset.narrative_relations = n.clone();
        }
        if let Some(rule) = o.narrative_rule {
            dataset.narrative_rule = rule;
        }
        for spec in [&file.thresholds, &common.thresholds].into_iter().flatten() {
            dataset.thresholds.apply(&Thresholds::parse_overrides(spec)?);
        }
        dataset.thresholds.check_range()?;
        dataset.validate()?;

        let names = common.bias_types.clone().or_else(|| file.bias_types.clone());
        let bias_types = match names {
            Some(names) => names
                .iter()
                .map(|n| n.trim().parse::<BiasType>())
                .collect::<std::result::Result<Vec<_>, _>>()?,
            None => BiasType::applicable(dataset.kind).to_vec(),
        };
        Ok(Self {
            dataset,
            bias_types,
            split: common.split.clone(),
            backend: common.backend.or(file.generation.backend),
            template: common.template.clone().or_else(|| file.template.clone()),
            mode: common.mode.clone().or_else(|| file.mode.clone()),
            seed: common.seed.or(file.seed).unwrap_or(0),
            out: common.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| "out".into()),
            file,
        })
    }

    /// Path of the split to read, falling back to `default`.
    pub fn split_path(&self, default: &str) -> Result<PathBuf> {
        let name = self.split.as_deref().unwrap_or(default);
        let path = match self.file.splits.get(name) {
            Some(p) => p.clone(),
            None if Path::new(name).is_file() => PathBuf::from(name),
            None => bail!("unknown split `{name}`: not in [splits] and not a file"),
        };
        require(&path)?;
        Ok(path)
    }

    pub fn template(&self) -> Result<Template> {
        let t: Template = match &self.template {
            Some(name) => name.parse()?,
            None => match self.dataset.kind {
                tkc_core::DatasetKind::Pairwise => Template::MatresMcqa,
                tkc_core::DatasetKind::ReadingComprehension => Template::TorqueV1,
            },
        };
        if t.kind() != self.dataset.kind {
            bail!("template {t} does not fit the {} dataset", self.dataset_name());
        }
        Ok(t)
    }

    pub fn augment_mode(&self) -> Result<Mode> {
        Ok(self.mode.as_deref().map(str::parse).transpose()?.unwrap_or_default())
    }

    pub fn icl_mode(&self) -> Result<IclMode> {
        Ok(self.mode.as_deref().map(str::parse).transpose()?.unwrap_or_default())
    }

    pub fn dataset_name(&self) -> &'static str {
        match self.dataset.kind {
            tkc_core::DatasetKind::Pairwise => "pairwise",
            tkc_core::DatasetKind::ReadingComprehension => "reading-comprehension",
        }
    }

    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        if self.file.sweep.points.is_empty() {
            return Ok(vec![
                SweepPoint {
                    name: "configured".into(),
                    ..Default::default()
                },
                SweepPoint {
                    name: "upper_bound".into(),
                    upper_bound: RelationLabel::ORDERED.to_vec(),
                    ..Default::default()
                },
            ]);
        }
        self.file
            .sweep
            .points
            .iter()
            .map(|p| {
                Ok(SweepPoint {
                    name: p.name.clone(),
                    overrides: match &p.thresholds {
                        Some(spec) => Thresholds::parse_overrides(spec)?,
                        None => Thresholds::new(),
                    },
                    upper_bound: p.upper_bound.clone(),
                })
            })
            .collect()
    }
}

/// Inputs must exist before a command starts writing anything.
pub fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(tkc_core::Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "input does not exist"),
        }
        .into());
    }
    Ok(())
}
