use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use biokge_core::eval::{evaluate_lp, EvalReport, DEFAULT_KS};
use biokge_core::hpo::{run_hpo, HpoOptions, SearchSpace};
use biokge_core::kg::{degree_stats, make_splits, SplitSet, TripleStore};
use biokge_core::rules::{evaluate_rules, learn, Aggregation, LearnOptions, RuleBase};
use biokge_core::training::fit;
use biokge_core::transfer::{
    build_pair_dataset, downstream_lp, train_classifier, Checkpoint, ClassifierConfig, EmbeddingMode, Precision,
};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::config::{layered, split_assignment, train_config};
use crate::manifest::{files_below, Recorder};

/// Reads a triple file, or the .tsv/.txt files of a directory in name order.
pub fn read_store(input: &Path) -> Result<TripleStore> {
    let files: Vec<PathBuf> = if input.is_dir() {
        files_below(input)?
            .into_iter()
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("tsv" | "txt")))
            .collect()
    } else {
        vec![input.to_path_buf()]
    };
    if files.len() == 1 {
        let file = fs::File::open(&files[0]).with_context(|| format!("cannot open {}", files[0].display()))?;
        return TripleStore::ingest(BufReader::new(file)).with_context(|| format!("reading {}", files[0].display()));
    }
    let mut text = String::new();
    for path in &files {
        text.push_str(&fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?);
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
    }
    TripleStore::ingest_str(&text).with_context(|| format!("reading {}", input.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_file(rec: &mut Recorder, path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    rec.output(path);
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn report_text(report: &EvalReport, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(report.to_json()? + "\n"),
        Format::Csv => Ok(report.to_csv()),
    }
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StoreSummary {
    entities: usize,
    relations: usize,
    triples: usize,
}

fn summary(store: &TripleStore) -> StoreSummary {
    StoreSummary {
        entities: store.num_entities(),
        relations: store.num_relations(),
        triples: store.len(),
    }
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let mut rec = Recorder::new("ingest");
    rec.input(&args.input)?;
    rec.config(&serde_json::json!({ "symmetric": args.symmetric }))?;
    let mut store = read_store(&args.input)?;
    if !args.symmetric.is_empty() {
        store = store.augment_symmetric(&args.symmetric)?;
    }
    create_dir(&args.output)?;
    let path = args.output.join("triples.tsv");
    store.write_tsv(BufWriter::new(fs::File::create(&path)?))?;
    rec.output(path);
    let text = json(&summary(&store))?;
    write_file(&mut rec, args.output.join("summary.json"), &text)?;
    rec.finish(&args.output)?;
    print(&text)
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let store = read_store(&args.input)?;
    let stats = degree_stats(&store);
    let text = match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            stats.write_csv(&mut buf)?;
            String::from_utf8(buf)?
        }
        Format::Json => json(&stats)?,
    };
    match &args.output {
        None => print(&text),
        Some(dir) => {
            let mut rec = Recorder::new("stats");
            rec.input(&args.input)?;
            rec.config(&serde_json::json!({ "format": extension(args.format) }))?;
            create_dir(dir)?;
            write_file(
                &mut rec,
                dir.join(format!("degree_stats.{}", extension(args.format))),
                &text,
            )?;
            rec.finish(dir)?;
            Ok(())
        }
    }
}

pub fn split(args: &SplitArgs) -> Result<()> {
    let mut rec = Recorder::new("split");
    rec.input(&args.input)?;
    rec.seed("split", args.seed);
    rec.config(&serde_json::json!({ "ratios": args.ratios, "symmetric": args.symmetric }))?;
    let mut store = read_store(&args.input)?;
    if !args.symmetric.is_empty() {
        store = store.augment_symmetric(&args.symmetric)?;
    }
    let ratios: [f64; 3] = args
        .ratios
        .as_slice()
        .try_into()
        .context("--ratios takes three fractions")?;
    let (set, manifest) = make_splits(&store, ratios, args.seed)?;
    set.write_dir(&args.output)?;
    for name in ["train.tsv", "valid.tsv", "test.tsv"] {
        rec.output(args.output.join(name));
    }
    write_file(
        &mut rec,
        args.output.join("split_manifest.json"),
        serde_json::to_string(&manifest)? + "\n",
    )?;
    let sizes = serde_json::json!({
        "train": set.train.len(),
        "valid": set.valid.len(),
        "test": set.test.len(),
    });
    rec.finish(&args.output)?;
    print(&json(&sizes)?)
}

pub fn train(args: &TrainArgs, workers: Option<usize>) -> Result<()> {
    let cfg = train_config(&args.config, workers)?;
    if args.dry_run {
        return print(&cfg.to_toml());
    }
    let mut rec = Recorder::new("train");
    rec.input(&args.splits)?;
    if let Some(path) = &args.config.config {
        rec.input(path)?;
    }
    rec.config(&cfg)?;
    rec.seed("root", cfg.seed);
    let splits = SplitSet::load_dir(&args.splits)?;
    create_dir(&args.output)?;
    write_file(&mut rec, args.output.join("config.toml"), cfg.to_toml())?;
    let (params, report) = fit(&splits, &cfg)?;
    write_file(&mut rec, args.output.join("train_log.jsonl"), report.to_json_lines()?)?;
    let eval = evaluate_lp(&params, &splits.test, &splits, &DEFAULT_KS)?;
    write_file(&mut rec, args.output.join("eval.json"), eval.to_json()? + "\n")?;
    let ck = Checkpoint::new(params, splits.entities().clone(), splits.relations().clone(), cfg)?;
    let path = args.output.join("model.ckpt");
    ck.save(&path, Precision::F64)?;
    rec.output(path);
    rec.finish(&args.output)?;
    print(&json(&serde_json::json!({
        "best_epoch": report.best_epoch,
        "test_mrr": eval.mrr,
        "test_hits": eval.hits,
    }))?)
}

fn eval_store(splits: &SplitSet, split: Split) -> &TripleStore {
    match split {
        Split::Valid => &splits.valid,
        Split::Test => &splits.test,
    }
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let splits = SplitSet::load_dir_with_vocab(&args.splits, ck.entities.clone(), ck.relations.clone())?;
    let report = evaluate_lp(&ck.params, eval_store(&splits, args.split), &splits, &DEFAULT_KS)?;
    let text = report_text(&report, args.format)?;
    match &args.output {
        None => print(&text),
        Some(dir) => {
            let mut rec = Recorder::new("eval");
            rec.input(&args.checkpoint)?;
            rec.input(&args.splits)?;
            rec.config(&serde_json::json!({ "split": format!("{:?}", args.split).to_lowercase() }))?;
            create_dir(dir)?;
            write_file(&mut rec, dir.join(format!("eval.{}", extension(args.format))), &text)?;
            rec.finish(dir)?;
            Ok(())
        }
    }
}

pub fn hpo(args: &HpoArgs, workers: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("hpo");
    rec.input(&args.splits)?;
    let mut space = match &args.config {
        Some(path) => {
            rec.input(path)?;
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            SearchSpace::from_toml(&text)?
        }
        None => SearchSpace::default(),
    };
    for assignment in &args.set {
        let (key, value) = split_assignment(assignment)?;
        space.fix(key, value);
    }
    rec.config(&serde_json::json!({
        "space": args.config,
        "fixed": args.set,
        "trials": args.trials,
    }))?;
    rec.seed("root", args.seed);
    let splits = SplitSet::load_dir(&args.splits)?;
    create_dir(&args.output)?;
    let log = args.output.join("trials.jsonl");
    let options = HpoOptions {
        trials: args.trials,
        seed: args.seed,
        parallel_trials: workers.unwrap_or(1),
        log_path: Some(log.clone()),
    };
    let report = run_hpo(&splits, &space, &options)?;
    rec.output(log);
    write_file(&mut rec, args.output.join("hpo_report.json"), json(&report)?)?;
    let best = report.best_trial();
    if let Some(best) = best {
        write_file(&mut rec, args.output.join("best.toml"), best.config.to_toml())?;
    }
    rec.finish(&args.output)?;
    print(&json(&serde_json::json!({
        "trials": report.trials.len(),
        "best": best.map(|t| t.index),
        "best_valid_mrr": best.and_then(|t| t.valid_mrr),
    }))?)
}

const LEARN_KEYS: [&str; 7] = [
    "time_budget_s",
    "max_length",
    "threshold",
    "min_confidence",
    "workers",
    "seed",
    "max_paths",
];

pub fn rules_learn(args: &RulesLearnArgs, workers: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("rules-learn");
    rec.input(&args.splits)?;
    if let Some(path) = &args.config {
        rec.input(path)?;
    }
    let mut opts: LearnOptions = layered(&LearnOptions::default(), &LEARN_KEYS, args.config.as_deref(), &args.set)?;
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    if let Some(w) = workers {
        opts.workers = w;
    }
    rec.config(&opts)?;
    rec.seed("root", opts.seed);
    let splits = SplitSet::load_dir(&args.splits)?;
    let base = learn(&splits.train, &opts)?;
    create_dir(&args.output)?;
    write_file(
        &mut rec,
        args.output.join("rules.txt"),
        base.to_text(splits.entities(), splits.relations())?,
    )?;
    rec.finish(&args.output)?;
    print(&json(&serde_json::json!({
        "rules": base.len(),
        "paths_sampled": base.meta.as_ref().map(|m| m.paths_sampled),
        "reproducible": base.meta.as_ref().map(|m| m.reproducible),
    }))?)
}

pub fn rules_eval(args: &RulesEvalArgs) -> Result<()> {
    let splits = SplitSet::load_dir(&args.splits)?;
    let text = fs::read_to_string(&args.rules).with_context(|| format!("cannot read {}", args.rules.display()))?;
    let base = RuleBase::parse(&text, splits.entities(), splits.relations())?;
    let aggregation = match args.aggregation {
        AggregationArg::Maximum => Aggregation::Maximum,
        AggregationArg::NoisyOr => Aggregation::NoisyOr,
    };
    let report = evaluate_rules(
        &base,
        eval_store(&splits, args.split),
        &splits,
        &DEFAULT_KS,
        aggregation,
    )?;
    let text = match args.format {
        Format::Json => json(&report)?,
        Format::Csv => report.report.to_csv(),
    };
    match &args.output {
        None => print(&text),
        Some(dir) => {
            let mut rec = Recorder::new("rules-eval");
            rec.input(&args.rules)?;
            rec.input(&args.splits)?;
            rec.config(&serde_json::json!({ "aggregation": aggregation }))?;
            create_dir(dir)?;
            write_file(
                &mut rec,
                dir.join(format!("rules_eval.{}", extension(args.format))),
                &text,
            )?;
            rec.finish(dir)?;
            Ok(())
        }
    }
}

fn table_tsv(names: &[String], rows: impl Fn(u32) -> Vec<f64>) -> String {
    let mut out = String::new();
    for (i, name) in names.iter().enumerate() {
        out.push_str(name);
        for v in rows(i as u32) {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn export(args: &ExportArgs) -> Result<()> {
    let mut rec = Recorder::new("export");
    rec.input(&args.checkpoint)?;
    let ck = load_checkpoint(&args.checkpoint)?;
    let (precision, suffix) = match args.precision {
        PrecisionArg::F32 => (Precision::F32, "f32"),
        PrecisionArg::F64 => (Precision::F64, "f64"),
    };
    rec.config(&serde_json::json!({ "precision": suffix }))?;
    create_dir(&args.output)?;
    let narrow = |row: &[f64]| -> Vec<f64> {
        match precision {
            Precision::F32 => row.iter().map(|&v| v as f32 as f64).collect(),
            Precision::F64 => row.to_vec(),
        }
    };
    let entities = table_tsv(ck.entities.names(), |e| narrow(ck.params.entity(e)));
    write_file(&mut rec, args.output.join("entity_embeddings.tsv"), entities)?;
    let relations = table_tsv(ck.relations.names(), |p| narrow(ck.params.relation(p)));
    write_file(&mut rec, args.output.join("relation_embeddings.tsv"), relations)?;
    let path = args.output.join(format!("model.{suffix}.ckpt"));
    ck.save(&path, precision)?;
    rec.output(path);
    rec.finish(&args.output)?;
    Ok(())
}

pub fn transfer_lp(args: &TransferLpArgs, workers: Option<usize>) -> Result<()> {
    let cfg = train_config(&args.config, workers)?;
    let mut rec = Recorder::new("transfer-lp");
    rec.input(&args.splits)?;
    if let Some(path) = &args.config.config {
        rec.input(path)?;
    }
    let pretrained = match &args.checkpoint {
        Some(path) => {
            rec.input(path)?;
            Some(load_checkpoint(path)?)
        }
        None => None,
    };
    rec.config(&cfg)?;
    rec.seed("root", cfg.seed);
    let splits = SplitSet::load_dir(&args.splits)?;
    let result = downstream_lp(&splits, &cfg, pretrained.as_ref())?;
    create_dir(&args.output)?;
    write_file(&mut rec, args.output.join("config.toml"), cfg.to_toml())?;
    write_file(
        &mut rec,
        args.output.join("train_log.jsonl"),
        result.train.to_json_lines()?,
    )?;
    write_file(&mut rec, args.output.join("eval.json"), result.eval.to_json()? + "\n")?;
    let summary = serde_json::json!({
        "warm_start": result.warm,
        "epochs_to_best": result.epochs_to_best(),
        "test_mrr": result.eval.mrr,
        "test_hits": result.eval.hits,
    });
    write_file(&mut rec, args.output.join("summary.json"), json(&summary)?)?;
    let ck = Checkpoint::new(
        result.params,
        splits.entities().clone(),
        splits.relations().clone(),
        cfg,
    )?;
    let path = args.output.join("model.ckpt");
    ck.save(&path, Precision::F64)?;
    rec.output(path);
    rec.finish(&args.output)?;
    print(&json(&summary)?)
}

/// Classifier settings plus the share of negative pairs per positive.
#[derive(Debug, Serialize, Deserialize)]
struct ClassifySettings {
    #[serde(flatten)]
    classifier: ClassifierConfig,
    negative_ratio: f64,
}

const CLASSIFY_KEYS: [&str; 9] = [
    "embedding_dim",
    "batch_size",
    "learning_rate",
    "mode",
    "hidden",
    "epochs",
    "init_std",
    "seed",
    "negative_ratio",
];

pub fn classify(args: &ClassifyArgs) -> Result<()> {
    let mut rec = Recorder::new("classify");
    rec.input(&args.input)?;
    if let Some(path) = &args.config {
        rec.input(path)?;
    }
    let defaults = ClassifySettings {
        classifier: ClassifierConfig::default(),
        negative_ratio: 1.0,
    };
    let mut settings: ClassifySettings = layered(&defaults, &CLASSIFY_KEYS, args.config.as_deref(), &args.set)?;
    if let Some(seed) = args.seed {
        settings.classifier.seed = seed;
    }
    let source = match &args.checkpoint {
        Some(path) => {
            rec.input(path)?;
            Some(load_checkpoint(path)?)
        }
        None => None,
    };
    match (settings.classifier.mode, &source) {
        (EmbeddingMode::Scratch, Some(_)) => bail!("--checkpoint is only used with mode frozen or fine_tuned"),
        (EmbeddingMode::Frozen | EmbeddingMode::FineTuned, None) => {
            bail!("mode {} needs --checkpoint", settings.classifier.mode.name())
        }
        _ => {}
    }
    rec.config(&settings)?;
    rec.seed("root", settings.classifier.seed);
    let task = read_store(&args.input)?;
    let dataset = build_pair_dataset(&task, settings.negative_ratio, settings.classifier.seed)?;
    let (_, report) = train_classifier(&dataset, source.as_ref(), &settings.classifier)?;
    create_dir(&args.output)?;
    for (name, examples) in [
        ("train", &dataset.train),
        ("valid", &dataset.valid),
        ("test", &dataset.test),
    ] {
        let path = args.output.join(format!("pairs_{name}.tsv"));
        dataset.write_tsv(examples, BufWriter::new(fs::File::create(&path)?))?;
        rec.output(path);
    }
    let text = json(&report)?;
    write_file(&mut rec, args.output.join("report.json"), &text)?;
    rec.finish(&args.output)?;
    print(&json(&serde_json::json!({
        "mode": report.mode,
        "best_epoch": report.best_epoch,
        "auroc": report.report.auroc,
        "auprc": report.report.auprc,
    }))?)
}
