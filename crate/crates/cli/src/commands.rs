use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tkc_core::bias::{build_tables, read_tables, write_tables, BiasTables};
use tkc_core::cda::{
    filter_augmented, generate, loss_filter, plan_augmentation, render, run_icl_batch, to_canonical, Annotation,
    AugmentOptions, CachingClient, CommandScorer, GenerationClient, HttpClient, IclMode, IclOptions, Rejection,
    ReplayClient, TaskItem,
};
use tkc_core::conflict::{parse_verdicts, select_subsets, threshold_sweep, write_selection};
use tkc_core::corpus::{load_dataset, write_dataset, AnnotatedInstance};
use tkc_core::eval::{
    gold_answers, parse_answer_records, render_markdown, significance_rows, subset_report, MetricsReport,
    ReportOptions,
};

use crate::config::{require, Backend, Settings};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item)?);
        out.push('\n');
    }
    Ok(out)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), n + 1)))
        .collect()
}

fn load(s: &Settings, default_split: &str) -> Result<(PathBuf, Vec<AnnotatedInstance>)> {
    let path = s.split_path(default_split)?;
    let instances = load_dataset(&path, &s.dataset)?.into_strict()?;
    Ok((path, instances))
}

fn tables_path(s: &Settings, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| s.file.bias_tables.clone())
        .unwrap_or_else(|| s.out.join("bias").join("tables.tsv"))
}

fn load_tables(s: &Settings, flag: Option<&Path>) -> Result<BiasTables> {
    let path = tables_path(s, flag);
    require(&path)?;
    let tables = read_tables(&path)?;
    if tables.relation_set != s.dataset.relation_set {
        bail!(
            "bias tables at {} were built over {:?}, the configuration uses {:?}",
            path.display(),
            tables.relation_set,
            s.dataset.relation_set
        );
    }
    Ok(tables)
}

fn client(s: &Settings, fixture_flag: Option<&Path>) -> Result<Option<Box<dyn GenerationClient>>> {
    match s.backend {
        None => Ok(None),
        Some(Backend::Replay) => {
            let path = fixture_flag
                .map(Path::to_path_buf)
                .or_else(|| s.file.generation.fixture.clone())
                .context("the replay backend needs a fixture (--fixture or [generation].fixture)")?;
            require(&path)?;
            Ok(Some(Box::new(ReplayClient::load(&path)?)))
        }
        Some(Backend::Http) => {
            let http = HttpClient::from_env(s.file.generation.http.clone())?;
            let cache = s.out.join("cache").join("generations.jsonl");
            if let Some(dir) = cache.parent() {
                fs::create_dir_all(dir)?;
            }
            Ok(Some(Box::new(CachingClient::with_file(http, &cache)?)))
        }
    }
}

#[derive(Serialize)]
struct Validation<'a> {
    path: &'a Path,
    valid: usize,
    invalid: usize,
    errors: &'a [tkc_core::corpus::RecordError],
}

pub fn ingest_validate(s: &Settings) -> Result<()> {
    let targets: Vec<(String, PathBuf)> = match &s.split {
        Some(name) => vec![(name.clone(), s.split_path(name)?)],
        None if !s.file.splits.is_empty() => {
            for p in s.file.splits.values() {
                require(p)?;
            }
            s.file.splits.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
        }
        None => bail!("nothing to validate: pass --split or configure [splits]"),
    };
    let mut failures = Vec::new();
    for (name, path) in targets {
        let outcome = load_dataset(&path, &s.dataset)?;
        let report = Validation {
            path: &path,
            valid: outcome.instances.len(),
            invalid: outcome.errors.len(),
            errors: &outcome.errors,
        };
        let safe = name.replace(['/', '\\'], "_");
        write(
            &s.out.join("validate").join(format!("{safe}.json")),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
        println!("{name}: {} valid, {} invalid", report.valid, report.invalid);
        if let Some(first) = outcome.errors.first() {
            failures.push(format!("{name}: {} invalid records, first at {first}", outcome.errors.len()));
        }
    }
    if !failures.is_empty() {
        return Err(tkc_core::Error::Record {
            line: 0,
            field: "$".into(),
            message: failures.join("; "),
        }
        .into());
    }
    Ok(())
}

pub fn bias(s: &Settings) -> Result<()> {
    let (path, instances) = load(s, "train")?;
    let tables = build_tables(&instances, &s.dataset, &path.display().to_string());
    let out = s.out.join("bias").join("tables.tsv");
    fs::create_dir_all(s.out.join("bias"))?;
    write_tables(&tables, &out)?;
    let keys: usize = tables.tables.values().map(|t| t.counts.len()).sum();
    println!("{} instances, {keys} keys -> {}", instances.len(), out.display());
    Ok(())
}

pub fn detect(s: &Settings, tables_flag: Option<&Path>) -> Result<()> {
    let tables = load_tables(s, tables_flag)?;
    let (_, eval) = load(s, "dev")?;
    let selection = select_subsets(&tables, &eval, &s.dataset, &s.bias_types)?;
    let dir = s.out.join("detect");
    fs::create_dir_all(&dir)?;
    write_selection(&selection, &dir)?;
    let sizes: BTreeMap<String, usize> = selection
        .subset_sizes()
        .into_iter()
        .map(|(bt, n)| (bt.to_string(), n))
        .collect();
    write(&dir.join("sizes.json"), serde_json::to_string_pretty(&sizes)? + "\n")?;
    for (bt, n) in &sizes {
        println!("{bt}: {n} of {}", eval.len());
    }
    Ok(())
}

pub fn sweep(s: &Settings, tables_flag: Option<&Path>) -> Result<()> {
    let tables = load_tables(s, tables_flag)?;
    let (_, eval) = load(s, "dev")?;
    let results = threshold_sweep(&tables, &eval, &s.dataset, &s.bias_types, &s.sweep_points()?);
    let mut tsv = String::from("point\tbias_type\tsize\n");
    for r in &results {
        match (&r.sizes, &r.skipped) {
            (Some(sizes), _) => {
                for (bt, n) in sizes {
                    tsv.push_str(&format!("{}\t{bt}\t{n}\n", r.name));
                }
            }
            (None, reason) => {
                tsv.push_str(&format!("{}\t-\tskipped: {}\n", r.name, reason.as_deref().unwrap_or("")));
            }
        }
    }
    let dir = s.out.join("sweep");
    write(&dir.join("sweep.tsv"), &tsv)?;
    write(&dir.join("sweep.json"), serde_json::to_string_pretty(&results)? + "\n")?;
    print!("{tsv}");
    Ok(())
}

pub struct AugmentArgs<'a> {
    pub tables: Option<&'a Path>,
    pub annotations: Option<&'a Path>,
    pub fixture: Option<&'a Path>,
    pub keep_fraction: Option<f64>,
}

pub fn augment(s: &Settings, args: AugmentArgs<'_>) -> Result<()> {
    let tables = load_tables(s, args.tables)?;
    let annotations_path = args
        .annotations
        .map(Path::to_path_buf)
        .or_else(|| s.file.augment.annotations.clone());
    if let Some(p) = &annotations_path {
        require(p)?;
    }
    let mode = s.augment_mode()?;
    let options = AugmentOptions {
        mode,
        seed: s.seed,
        warmup_events: s.file.augment.warmup_events,
        max_prompts: s.file.augment.max_prompts,
    };
    let requests = plan_augmentation(&tables, &s.dataset, &options)?;
    let dir = s.out.join("augment");
    write(&dir.join("requests.jsonl"), jsonl(&requests)?)?;
    let Some(client) = client(s, args.fixture)? else {
        println!("{} prompts planned ({mode}); no backend, nothing generated", requests.len());
        return Ok(());
    };
    let gen = &s.file.generation;
    let (examples, failures) = generate(&requests, client.as_ref(), &gen.params, mode, gen.concurrency)?;
    write(&dir.join("generated.jsonl"), jsonl(&examples)?)?;
    write(&dir.join("failures.jsonl"), jsonl(&failures)?)?;

    let Some(ann_path) = annotations_path else {
        println!(
            "{} prompts, {} generated, {} failed; no annotations, filtering skipped",
            requests.len(),
            examples.len(),
            failures.len()
        );
        return Ok(());
    };
    let annotations: BTreeMap<String, Annotation> = read_jsonl::<Annotation>(&ann_path)?
        .into_iter()
        .map(|a| (a.id.clone(), a))
        .collect();
    let filtered = filter_augmented(&examples, &annotations, &tables, &s.dataset)?;
    let mut rejected: Vec<Rejection> = filtered.rejected;
    let keep_fraction = args.keep_fraction.unwrap_or(s.file.augment.keep_fraction);
    let kept = match &s.file.augment.loss_scorer {
        Some(cmd) if keep_fraction < 1.0 => {
            let (program, rest) = cmd.split_first().context("[augment].loss_scorer is empty")?;
            let scorer = CommandScorer {
                program: program.into(),
                args: rest.to_vec(),
            };
            let (kept, dropped) = loss_filter(filtered.kept, &scorer, keep_fraction)?;
            rejected.extend(dropped);
            kept
        }
        None if keep_fraction < 1.0 => bail!("keep_fraction below 1 needs [augment].loss_scorer"),
        _ => filtered.kept,
    };
    rejected.sort_by(|a, b| a.id.cmp(&b.id));
    let records: Vec<AnnotatedInstance> = kept
        .iter()
        .filter_map(|e| to_canonical(e, &annotations[&e.id]))
        .collect();
    let mut buf = Vec::new();
    write_dataset(&mut buf, &records)?;
    write(&dir.join("augmented.jsonl"), buf)?;
    #[derive(Serialize)]
    struct Prov<'a> {
        id: &'a str,
        #[serde(flatten)]
        provenance: &'a tkc_core::cda::Provenance,
    }
    write(
        &dir.join("provenance.jsonl"),
        jsonl(kept.iter().map(|e| Prov {
            id: &e.id,
            provenance: &e.provenance,
        }))?,
    )?;
    write(&dir.join("rejections.jsonl"), jsonl(&rejected)?)?;
    println!(
        "{} prompts, {} generated, {} kept, {} rejected",
        requests.len(),
        examples.len(),
        records.len(),
        rejected.len()
    );
    Ok(())
}

pub fn icl(s: &Settings, fixture: Option<&Path>) -> Result<()> {
    let template = s.template()?;
    let mode = s.icl_mode()?;
    let (_, eval) = load(s, "dev")?;
    let dir = s.out.join("icl");
    let Some(client) = client(s, fixture)? else {
        #[derive(Serialize)]
        struct Rendered<'a> {
            id: &'a str,
            prompt: String,
        }
        let prompts = eval
            .iter()
            .map(|inst| {
                Ok(Rendered {
                    id: inst.id(),
                    prompt: render(template, &TaskItem::from_instance(inst))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write(&dir.join("prompts.jsonl"), jsonl(&prompts)?)?;
        println!("{} zero-shot prompts rendered; no backend, no predictions", prompts.len());
        return Ok(());
    };
    let options = IclOptions {
        mode,
        seed: s.seed,
        pairwise_answers: s.file.icl.pairwise_answers,
        warmup_answers: s.file.icl.warmup_answers,
        params: s.file.generation.params.clone(),
    };
    let records = run_icl_batch(
        &eval,
        client.as_ref(),
        template,
        &s.dataset,
        &options,
        s.file.generation.concurrency,
    )?;
    write(&dir.join("records.jsonl"), jsonl(&records)?)?;
    #[derive(Serialize)]
    struct Prompt<'a> {
        id: &'a str,
        prompt: &'a str,
    }
    write(
        &dir.join("prompts.jsonl"),
        jsonl(records.iter().map(|r| Prompt {
            id: &r.id,
            prompt: &r.prompt,
        }))?,
    )?;
    write(&dir.join("predictions.jsonl"), jsonl(records.iter().map(|r| &r.prediction))?)?;
    if mode != IclMode::ZeroShot {
        write(
            &dir.join("zero_shot_predictions.jsonl"),
            jsonl(records.iter().map(|r| &r.zero_shot))?,
        )?;
    }
    let demos: usize = records.iter().map(|r| r.demos.len()).sum();
    println!("{} instances, {demos} demos, template {template}, mode {mode}", records.len());
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub predictions: Option<&'a Path>,
    pub predictions_b: Option<&'a Path>,
    pub verdicts: Option<&'a Path>,
    pub iterations: Option<usize>,
    pub binary_f1: bool,
}

fn read_answers(path: &Path) -> Result<BTreeMap<String, tkc_core::eval::Answer>> {
    require(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_answer_records(&text)?)
}

pub fn evaluate(s: &Settings, args: EvaluateArgs<'_>) -> Result<()> {
    let cfg = &s.file.evaluate;
    let preds_path = args
        .predictions
        .map(Path::to_path_buf)
        .or_else(|| cfg.predictions.clone())
        .unwrap_or_else(|| s.out.join("icl").join("predictions.jsonl"));
    let preds = read_answers(&preds_path)?;
    let preds_b = args
        .predictions_b
        .map(Path::to_path_buf)
        .or_else(|| cfg.predictions_b.clone())
        .map(|p| read_answers(&p))
        .transpose()?;
    let (_, eval) = load(s, "dev")?;
    let golds = gold_answers(&eval);
    let verdicts_path = args.verdicts.map(Path::to_path_buf).or_else(|| cfg.verdicts.clone());
    let verdicts = match verdicts_path {
        Some(p) => {
            require(&p)?;
            parse_verdicts(&fs::read_to_string(&p)?)?
        }
        None => {
            let default = s.out.join("detect").join("verdicts.jsonl");
            if default.exists() {
                parse_verdicts(&fs::read_to_string(&default)?)?
            } else {
                Vec::new()
            }
        }
    };
    let options = ReportOptions {
        binary_f1: args.binary_f1 || cfg.binary_f1,
    };
    let mut report = subset_report(&preds, &golds, &verdicts, options)?;
    if let Some(b) = &preds_b {
        let iterations = args.iterations.unwrap_or(cfg.iterations);
        report.significance =
            significance_rows(&preds, b, &golds, &verdicts, &report.metrics, iterations, s.seed)?;
    }
    let out = s.out.join("evaluate").join("report.json");
    write(&out, report.to_json()?)?;
    if let Some(all) = report.subset(tkc_core::eval::ALL) {
        let values: Vec<String> = all
            .values
            .iter()
            .map(|(k, v)| format!("{k}={}", v.map_or("n/a".into(), |x| format!("{x:.4}"))))
            .collect();
        println!("all (n={}): {}", all.size, values.join(" "));
    }
    Ok(())
}

pub fn report(s: &Settings, input: Option<&Path>) -> Result<()> {
    let path = input
        .map(Path::to_path_buf)
        .unwrap_or_else(|| s.out.join("evaluate").join("report.json"));
    require(&path)?;
    let report = MetricsReport::from_json(&fs::read_to_string(&path)?)?;
    let md = render_markdown(&report);
    write(&s.out.join("report").join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}
