//! The `cga` command line: one subcommand per pipeline stage, each writing
//! its artifacts and a `manifest.json` into `--out`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::augmentation::{aggregate, aggregate_csv, best_rows, rows_csv, run_grid, summary_markdown, Example, GridData};
use crate::config::{parse_config, Profile, RunConfig};
use crate::corpus::{
    generate_toy_corpus, label_records, make_splits, read_jsonl, toy_synonym_table, write_jsonl, LabeledCorpus,
    LabeledRecord, LexiconTagger, PosTagger, RawRecord, Vocabulary,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    analyze_similarity, ascii_histogram, attribute_matching, probe_disentanglement, MeanWordVectors, OracleBundle,
};
use crate::generation::{generate_dataset, with_provenance, GenerationRequest};
use crate::rng::derive_seed;
use crate::training::{load_checkpoint, save_checkpoint, train, CheckpointMeta, TrainOptions, TrainState};

#[derive(Debug, Parser)]
#[command(name = "cga", version, about = "Attribute-controlled sentence generation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run-config file (TOML) merged over the profile defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted override applied after the file, e.g. `schedule.wd_tau=250`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Top-level seed; replaces `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "yelp")]
    pub profile: Profile,
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize and label a raw corpus (or draw the toy grammar).
    Label {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train a model on a labeled corpus.
    Train {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Checkpoint and stop after this many steps.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Generate a balanced labeled corpus from a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate generated text or a trained model.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Data-augmentation experiments.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Collect result files under a directory into one table.
    Report {
        /// Results directory; defaults to `--out`.
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Oracle agreement with the requested labels.
    AttrMatch {
        /// Generated corpus.
        #[arg(long)]
        input: PathBuf,
        /// Labeled corpus the classifier oracles are trained on.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Cosine-similarity block structure of generated sentences.
    Similarity {
        #[arg(long)]
        input: PathBuf,
        /// Source of word vectors when `eval.word_vectors` is unset.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Attribute probes on frozen latent codes.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled corpus to encode.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AugmentCommand {
    /// Downstream accuracy over base sizes, sources, percentages and seeds.
    Grid {
        /// Generated corpus used as the CGA pool.
        #[arg(long)]
        generated: PathBuf,
        /// Real labeled corpus.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Serialize)]
struct Manifest {
    command: String,
    version: &'static str,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<String>,
    substreams: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    summary: serde_json::Map<String, serde_json::Value>,
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.manifest.artifacts.push(name.to_string());
        p
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)?;
        self.write(name, &(text + "\n"))
    }

    fn seed(&mut self, name: &str) -> u64 {
        let s = derive_seed(self.cfg.seed, name);
        self.manifest.substreams.insert(name.to_string(), s);
        s
    }

    fn note(&mut self, key: &str, value: serde_json::Value) {
        self.manifest.summary.insert(key.to_string(), value);
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.artifacts.sort();
        self.manifest.artifacts.dedup();
        let p = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}

fn load_labeled(path: &Path, schema: &crate::corpus::AttributeSchema) -> Result<LabeledCorpus> {
    let records: Vec<LabeledRecord> = read_jsonl(path)?;
    LabeledCorpus::from_records(schema, records)
}

/// The labeled corpus for this run: `input` if given, else `data.corpus`
/// labeled on the fly, else the toy grammar.
fn corpus_for(run: &mut Run, input: Option<&Path>) -> Result<LabeledCorpus> {
    let schema = run.cfg.schema.clone();
    if let Some(p) = input {
        run.input(p)?;
        return load_labeled(p, &schema);
    }
    if let Some(p) = run.cfg.data.corpus.clone() {
        run.input(&p)?;
        let raw: Vec<RawRecord> = read_jsonl(&p)?;
        return Ok(label_records(&raw, &schema, &LexiconTagger)?.corpus);
    }
    run.manifest.substreams.insert("data/toy".into(), run.cfg.data.toy_seed);
    generate_toy_corpus(run.cfg.data.toy_sentences, &schema, run.cfg.data.toy_seed)
}

fn checkpoint_for(run: &mut Run, path: &Path) -> Result<TrainState> {
    run.input(path)?;
    load_checkpoint(path)
}

fn label(run: &mut Run, input: Option<&Path>) -> Result<()> {
    let (corpus, excluded) = match input {
        Some(p) => {
            run.input(p)?;
            let raw: Vec<RawRecord> = read_jsonl(p)?;
            let o = label_records(&raw, &run.cfg.schema, &LexiconTagger)?;
            (o.corpus, o.excluded)
        }
        None => (corpus_for(run, None)?, BTreeMap::new()),
    };
    let p = run.path("labeled.jsonl");
    corpus.save_jsonl(&p)?;
    run.json("label_stats.json", &json!({"kept": corpus.len(), "excluded": excluded}))?;
    run.note("kept", json!(corpus.len()));
    Ok(())
}

fn train_cmd(run: &mut Run, input: Option<&Path>, resume: Option<&Path>, stop_after: Option<u64>) -> Result<()> {
    let corpus = corpus_for(run, input)?;
    let split_seed = run.seed("data/splits");
    let (train_c, valid_c, test_c) = make_splits(&corpus.sentences, run.cfg.data.splits, split_seed)?;
    let (train_c, valid_c, test_c) = (
        corpus.with_sentences(train_c),
        corpus.with_sentences(valid_c),
        corpus.with_sentences(test_c),
    );
    let train_seed = run.seed("train");
    let mut state = match resume {
        Some(p) => {
            let st = checkpoint_for(run, p)?;
            if st.seed != train_seed {
                return Err(Error::InvalidInput(format!(
                    "checkpoint was trained with seed {} but this run derives {train_seed}",
                    st.seed
                )));
            }
            st
        }
        None => {
            let vocab = Vocabulary::build(&train_c.token_lists(), run.cfg.data.min_freq)?;
            let model_cfg = run.cfg.model.resolve(vocab.len(), &run.cfg.schema);
            let meta = CheckpointMeta {
                schema: run.cfg.schema.clone(),
                vocab,
                run_config: run.cfg.to_toml()?,
            };
            let st = TrainState::new(model_cfg, meta, &run.cfg.train, train_seed)?;
            if let Some(p) = run.cfg.model.pretrained_embeddings.clone() {
                run.input(&p)?;
                init_embeddings(&st, &MeanWordVectors::load_text(&p)?)?;
            }
            st
        }
    };
    let vocab = state.meta.vocab.clone();
    for (name, c) in [("train.jsonl", &train_c), ("valid.jsonl", &valid_c), ("test.jsonl", &test_c)] {
        let p = run.path(name);
        c.save_jsonl(&p)?;
    }
    vocab.save(&run.path("vocab.json"))?;
    let max_len = run.cfg.data.max_len;
    let train_x = train_c.encode(&vocab, max_len)?;
    let valid_x = valid_c.encode(&vocab, max_len)?;
    let opts = TrainOptions {
        out_dir: Some(run.out.clone()),
        stop_after,
    };
    let report = train(&mut state, &train_x, &valid_x, &run.cfg.train, &run.cfg.schedule, &opts)?;
    for name in ["metrics.csv", "validation.csv"] {
        if run.out.join(name).exists() {
            run.path(name);
        }
    }
    for p in report.last_checkpoint.iter().chain(report.best_checkpoint.iter()) {
        if let Some(name) = p.file_name() {
            run.path(&name.to_string_lossy());
        }
    }
    if !report.interrupted {
        let p = run.path("model.ckpt");
        save_checkpoint(&state, &p)?;
    }
    run.note("steps", json!(state.step));
    run.note("interrupted", json!(report.interrupted));
    if let Some((_, v)) = report.validations.last() {
        run.note("valid_loss", json!(v.loss));
    }
    Ok(())
}

fn init_embeddings(state: &TrainState, vectors: &MeanWordVectors) -> Result<()> {
    let mut table: Vec<Vec<f32>> = state.model.params.var("emb.weight")?.as_tensor().to_vec2()?;
    let mut found = 0;
    for (row, token) in table.iter_mut().zip(state.meta.vocab.tokens()) {
        if let Some(v) = vectors.vectors.get(token) {
            if v.len() != row.len() {
                return Err(Error::InvalidInput(format!(
                    "word vectors have dimension {}, the model expects {}",
                    v.len(),
                    row.len()
                )));
            }
            *row = v.iter().map(|&x| x as f32).collect();
            found += 1;
        }
    }
    log::info!("initialized {found} of {} embeddings from word vectors", table.len());
    state.model.set_embeddings(&table)
}

fn generate_cmd(run: &mut Run, checkpoint: &Path) -> Result<()> {
    let state = checkpoint_for(run, checkpoint)?;
    let g = &run.cfg.generate;
    let mut req = GenerationRequest::new(g.per_combination, g.mode, 0);
    req.max_len = g.max_len;
    req.dedup = g.dedup;
    req.max_retries = g.max_retries;
    req.seed = run.seed("generate");
    let out = generate_dataset(&req, &state.model, &state.meta.schema, &state.meta.vocab)?;
    let records = with_provenance(&out.corpus, &checkpoint.display().to_string(), req.seed);
    let p = run.path("generated.jsonl");
    write_jsonl(&p, &records)?;
    run.json("shortfall.json", &out.shortfall)?;
    run.note("generated", json!(out.corpus.len()));
    Ok(())
}

fn embedder_for(run: &mut Run, checkpoint: Option<&Path>) -> Result<MeanWordVectors> {
    if let Some(p) = run.cfg.eval.word_vectors.clone() {
        run.input(&p)?;
        return MeanWordVectors::load_text(&p);
    }
    let Some(ckpt) = checkpoint else {
        return Err(Error::config("eval.word_vectors", "unset and no --checkpoint given"));
    };
    let state = checkpoint_for(run, ckpt)?;
    let table: Vec<Vec<f32>> = state.model.params.var("emb.weight")?.as_tensor().to_vec2()?;
    Ok(MeanWordVectors::from_table(&state.meta.vocab, &table))
}

fn eval_cmd(run: &mut Run, which: &EvalCommand) -> Result<()> {
    let schema = run.cfg.schema.clone();
    match which {
        EvalCommand::AttrMatch { input, reference } => {
            run.input(input)?;
            let generated = load_labeled(input, &schema)?;
            let reference = corpus_for(run, reference.as_deref())?;
            let seed = run.seed("eval/oracles");
            let tagger: Arc<dyn PosTagger> = Arc::new(LexiconTagger);
            let bundle = OracleBundle::build(&reference, tagger, &run.cfg.eval.textcnn, seed)?;
            let stats = attribute_matching(&generated, &bundle, run.cfg.eval.n_splits)?;
            run.json(
                "attr_match.json",
                &json!({"matching": stats, "oracle_accuracy": bundle.accuracy}),
            )?;
            for (k, s) in &stats {
                run.note(k, json!(s.mean));
            }
        }
        EvalCommand::Similarity { input, checkpoint } => {
            run.input(input)?;
            let generated = load_labeled(input, &schema)?;
            let embedder = embedder_for(run, checkpoint.as_deref())?;
            let attr = run.cfg.eval.similarity_attribute.clone();
            let (_, analysis) = analyze_similarity(&generated, &attr, &embedder, run.cfg.eval.k_neighbors)?;
            run.json("similarity.json", &analysis)?;
            let text: String = analysis
                .summary
                .histograms
                .iter()
                .map(|(k, h)| format!("## {k}\n{}\n", ascii_histogram(h, 40)))
                .collect();
            run.write("similarity_histograms.txt", &text)?;
            run.note("mean_intra", json!(analysis.summary.mean_intra));
            run.note("mean_cross", json!(analysis.summary.mean_cross));
        }
        EvalCommand::Probe { checkpoint, input } => {
            let state = checkpoint_for(run, checkpoint)?;
            let corpus = corpus_for(run, input.as_deref())?;
            let examples = corpus.encode(&state.meta.vocab, run.cfg.data.max_len)?;
            let seed = run.seed("eval/probe");
            let report = probe_disentanglement(&state.model, &corpus, &examples, &run.cfg.eval.probe, seed)?;
            run.json("probe.json", &report)?;
            run.note("mean_accuracy", json!(report.mean_accuracy()));
        }
    }
    Ok(())
}

fn sentences_to_examples(corpus: &LabeledCorpus, k: usize) -> Vec<Example> {
    corpus
        .sentences
        .iter()
        .map(|s| (s.tokens.clone(), s.labels[k]))
        .collect()
}

fn augment_cmd(run: &mut Run, generated: &Path, input: Option<&Path>) -> Result<()> {
    let schema = run.cfg.schema.clone();
    let attr = run.cfg.augment.attribute.clone();
    let k = schema
        .index_of(&attr)
        .ok_or_else(|| Error::config("augment.attribute", format!("`{attr}` is not a schema attribute")))?;
    let corpus = corpus_for(run, input)?;
    run.input(generated)?;
    let gen = load_labeled(generated, &schema)?;
    let all = sentences_to_examples(&corpus, k);
    let test_size = run.cfg.augment.test_size;
    if test_size >= all.len() {
        return Err(Error::InsufficientData(format!(
            "test size {test_size} leaves no training pool out of {}",
            all.len()
        )));
    }
    let (real, test) = all.split_at(all.len() - test_size);
    let gen = sentences_to_examples(&gen, k);
    let synonyms = toy_synonym_table();
    let data = GridData {
        real,
        test,
        generated: &gen,
        synonyms: &synonyms,
        classes: schema.attributes[k].values.len(),
    };
    let rows = run_grid(&run.cfg.augment.grid, &data, &run.cfg.augment.downstream)?;
    let agg = aggregate(&rows);
    run.write("grid_rows.csv", &rows_csv(&rows))?;
    run.write("grid_aggregate.csv", &aggregate_csv(&agg))?;
    run.write("grid_summary.md", &summary_markdown(&best_rows(&agg)))?;
    run.note("cells", json!(rows.len()));
    Ok(())
}

/// One line of the `report` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run: String,
    pub metric: String,
    pub value: f64,
}

fn json_metrics(run: &str, file: &str, v: &serde_json::Value, rows: &mut Vec<ReportRow>) {
    let mut push = |metric: String, value: Option<f64>| {
        if let Some(value) = value {
            rows.push(ReportRow { run: run.to_string(), metric, value });
        }
    };
    match file {
        "attr_match.json" => {
            if let Some(m) = v["matching"].as_object() {
                for (k, s) in m {
                    push(format!("match/{k}"), s["mean"].as_f64());
                }
            }
        }
        "probe.json" => {
            if let Some(m) = v["accuracy"].as_object() {
                for (k, a) in m {
                    push(format!("probe/{k}"), a.as_f64());
                }
            }
        }
        "similarity.json" => {
            push("similarity/intra".into(), v["summary"]["mean_intra"].as_f64());
            push("similarity/cross".into(), v["summary"]["mean_cross"].as_f64());
        }
        _ => {}
    }
}

/// Walks `dir` for known result files and flattens them into rows.
pub fn collect_report(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = match std::fs::read_dir(&d) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(e) => return Err(Error::io(&d, e)),
        };
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths {
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let name = p.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
            let run = p
                .parent()
                .and_then(|q| q.strip_prefix(dir).ok())
                .map(|q| q.display().to_string())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| ".".into());
            if name == "grid_aggregate.csv" {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                for line in text.lines().skip(1) {
                    let f: Vec<&str> = line.split(',').collect();
                    if f.len() >= 6 {
                        if let Ok(mean) = f[4].parse() {
                            rows.push(ReportRow {
                                run: run.clone(),
                                metric: format!("grid/{}/{}/{}", f[1], f[2], f[3]),
                                value: mean,
                            });
                        }
                    }
                }
            } else if name.ends_with(".json") && name != "manifest.json" {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) {
                    json_metrics(&run, &name, &v, &mut rows);
                }
            }
        }
    }
    rows.sort_by(|a, b| (&a.run, &a.metric).cmp(&(&b.run, &b.metric)));
    Ok(rows)
}

pub fn report_markdown(rows: &[ReportRow]) -> String {
    let mut s = String::from("| run | metric | value |\n|---|---|---|\n");
    for r in rows {
        s.push_str(&format!("| {} | {} | {:.4} |\n", r.run, r.metric, r.value));
    }
    s
}

fn report_cmd(run: &mut Run, dir: &Path) -> Result<()> {
    let rows = collect_report(dir)?;
    let table = report_markdown(&rows);
    run.write("report.md", &table)?;
    print!("{table}");
    Ok(())
}

fn set_workers() {
    let n = std::env::var("CGA_NUM_WORKERS").ok().and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = n.filter(|&n| n > 0) {
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs a parsed invocation.
pub fn dispatch(cli: &Cli) -> Result<()> {
    set_workers();
    let mut overrides = cli.common.overrides.clone();
    if let Some(s) = cli.common.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = parse_config(cli.common.profile, cli.common.config.as_deref(), &overrides)?;
    let out = cli.common.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let command = match &cli.command {
        Command::Label { .. } => "label",
        Command::Train { .. } => "train",
        Command::Generate { .. } => "generate",
        Command::Eval(EvalCommand::AttrMatch { .. }) => "eval attr-match",
        Command::Eval(EvalCommand::Similarity { .. }) => "eval similarity",
        Command::Eval(EvalCommand::Probe { .. }) => "eval probe",
        Command::Augment(AugmentCommand::Grid { .. }) => "augment grid",
        Command::Report { .. } => "report",
    };
    let mut run = Run {
        manifest: Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(&cfg)?,
            ..Manifest::default()
        },
        cfg,
        out: out.clone(),
    };
    if let Some(c) = &cli.common.config {
        run.input(c)?;
    }
    match &cli.command {
        Command::Label { input } => label(&mut run, input.as_deref())?,
        Command::Train { input, resume, stop_after } => {
            train_cmd(&mut run, input.as_deref(), resume.as_deref(), *stop_after)?
        }
        Command::Generate { checkpoint } => generate_cmd(&mut run, checkpoint)?,
        Command::Eval(which) => eval_cmd(&mut run, which)?,
        Command::Augment(AugmentCommand::Grid { generated, input }) => augment_cmd(&mut run, generated, input.as_deref())?,
        Command::Report { dir } => {
            let dir = dir.clone().unwrap_or(out);
            report_cmd(&mut run, &dir)?
        }
    }
    run.finish()
}

/// Error body printed on stderr when a command fails.
pub fn error_json(e: &Error) -> String {
    json!({"error": {"kind": e.kind(), "message": e.to_string()}}).to_string()
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            1
        }
    }
}
