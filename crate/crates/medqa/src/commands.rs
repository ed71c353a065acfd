use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use medqa_core::corpus::{filter_medical, load_qa_records, parse_pairs, sample_balanced, serialize_pairs, tag_keywords, FilterReport, QuoraRow};
use medqa_core::entity::{EntityExtractor, MedicalDictionary};
use medqa_core::model_io::{save_model, SavedModel};
use medqa_core::similarity::SimilarityModel;
use medqa_core::synthetic::{toy_corpus, toy_vectors, toy_vocabulary, write_vectors};
use medqa_core::trainer::{evaluate, split, train, write_loss_csv, EvalReport, LabeledPair, PairScorer, TrainConfig};
use serde::Serialize;

use crate::stack::{load_model_file, load_vectors_file, open, read_text, StackArgs};

#[derive(Debug, Parser)]
#[command(name = "medqa", version, about = "Hybrid knowledge-graph and neural-retrieval medical QA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a similarity model on labeled question pairs.
    Train(TrainArgs),
    /// Score labeled pairs with a model or a precomputed score file.
    Eval(EvalArgs),
    /// Keep pairs mentioning a medical term, optionally sampling a balanced subset.
    Filter(FilterArgs),
    /// Answer one question.
    Query(QueryArgs),
    /// Run the HTTP chat service.
    Serve(ServeArgs),
    /// Write the synthetic toy corpus, vectors and config to a directory.
    ToyData(ToyDataArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with TrainConfig fields; missing keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pair TSV (id, qid1, qid2, question1, question2, is_duplicate).
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub vectors: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV [default: <out>.loss.csv].
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Overrides the config seed (initialization, shuffling, split, OOV vectors).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, requires = "vectors", conflicts_with = "scores")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// CSV with `id,similarity` per pair row instead of a model.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    /// Restrict the dictionary to tags found in these QA records.
    #[arg(long)]
    pub tags_from: Option<PathBuf>,
    /// Balanced sample size drawn from the kept rows.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Write kept (or sampled) rows here as TSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub text: String,
    #[command(flatten)]
    pub stack: StackArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub stack: StackArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
}

#[derive(Debug, Args)]
pub struct ToyDataArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<QuoraRow>> {
    let parsed = parse_pairs(open(path)?).with_context(|| format!("in pair file {}", path.display()))?;
    for e in parsed.errors.iter().take(10) {
        eprintln!("warning: {} line {}: {}", path.display(), e.line, e.message);
    }
    if parsed.errors.len() > 10 {
        eprintln!("warning: {} more malformed rows skipped", parsed.errors.len() - 10);
    }
    Ok(parsed.rows)
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub epochs: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub held_out: EvalReport,
    pub model: PathBuf,
    pub loss_csv: PathBuf,
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainSummary> {
    let mut config = match &args.config {
        Some(p) => TrainConfig::from_toml(&read_text(p)?).with_context(|| format!("in config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let table = load_vectors_file(&args.vectors)?.with_oov_seed(config.seed);
    if table.dim() != config.embedding_dim {
        bail!(
            "embedding_dim is {} but {} has {}-dim vectors",
            config.embedding_dim,
            args.vectors.display(),
            table.dim()
        );
    }
    let pairs: Vec<LabeledPair> = read_pairs(&args.pairs)?.iter().map(QuoraRow::to_labeled).collect();
    if pairs.len() < 2 {
        bail!("{} has fewer than two usable pairs", args.pairs.display());
    }
    let (train_set, test_set) = split(&pairs, config.train_fraction, config.seed)?;
    if test_set.is_empty() {
        bail!("train_fraction {} leaves no held-out pairs", config.train_fraction);
    }
    let outcome = train(&config, &table, &train_set)?;

    let saved = SavedModel {
        params: outcome.params,
        seed: config.seed,
        max_seq_length: config.max_seq_length,
        oov_seed: table.oov_seed(),
    };
    let mut w = create(&args.out)?;
    save_model(&saved, &mut w)?;
    w.flush()?;
    let loss_csv = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.loss.csv", args.out.display())));
    let mut w = create(&loss_csv)?;
    write_loss_csv(&mut w, &outcome.loss_history)?;
    w.flush()?;

    let model = SimilarityModel::new(saved.params, table, config.max_seq_length)?;
    let held_out = evaluate(&model, &test_set, args.threshold)?;
    let summary = TrainSummary {
        train_pairs: train_set.len(),
        test_pairs: test_set.len(),
        epochs: config.epochs,
        first_loss: outcome.loss_history[0],
        final_loss: *outcome.loss_history.last().expect("epochs >= 1"),
        held_out,
        model: args.out.clone(),
        loss_csv,
    };
    if args.json {
        print_json(out, &summary)?;
    } else {
        writeln!(
            out,
            "trained {} epochs on {} pairs: loss {:.4} -> {:.4}",
            summary.epochs, summary.train_pairs, summary.first_loss, summary.final_loss
        )?;
        writeln!(
            out,
            "held-out accuracy {:.4} ({}/{}) at threshold {}",
            summary.held_out.accuracy, summary.held_out.n_correct, summary.held_out.n_total, args.threshold
        )?;
        writeln!(out, "model written to {}", summary.model.display())?;
    }
    Ok(summary)
}

/// Similarities read from an `id,similarity` CSV, matched to pairs by row id.
struct ScoreFile {
    by_pair: HashMap<(String, String), f64>,
}

impl PairScorer for ScoreFile {
    fn similarity(&self, pair: &LabeledPair) -> medqa_core::Result<f64> {
        self.by_pair
            .get(&(pair.q1.clone(), pair.q2.clone()))
            .copied()
            .ok_or_else(|| medqa_core::Error::InvalidArgument(format!("no score for pair {:?} / {:?}", pair.q1, pair.q2)))
    }
}

fn read_scores(path: &Path, rows: &[QuoraRow]) -> Result<ScoreFile> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let mut by_id = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{} row {}", path.display(), i + 2))?;
        let bad = || format!("{} row {}: expected `id,similarity`", path.display(), i + 2);
        let id: u64 = rec.get(0).and_then(|s| s.trim().parse().ok()).with_context(bad)?;
        let sim: f64 = rec.get(1).and_then(|s| s.trim().parse().ok()).with_context(bad)?;
        by_id.insert(id, sim);
    }
    let mut by_pair = HashMap::new();
    for r in rows {
        let sim = by_id
            .get(&r.id)
            .with_context(|| format!("{} has no score for pair id {}", path.display(), r.id))?;
        by_pair.insert((r.question1.clone(), r.question2.clone()), *sim);
    }
    Ok(ScoreFile { by_pair })
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<EvalReport> {
    let rows = read_pairs(&args.pairs)?;
    let pairs: Vec<LabeledPair> = rows.iter().map(QuoraRow::to_labeled).collect();
    let report = match (&args.scores, &args.model, &args.vectors) {
        (Some(scores), _, _) => evaluate(&read_scores(scores, &rows)?, &pairs, args.threshold)?,
        (None, Some(model), Some(vectors)) => {
            let model = load_model_file(model, load_vectors_file(vectors)?)?;
            evaluate(&model, &pairs, args.threshold)?
        }
        _ => bail!("eval needs --scores, or --model with --vectors"),
    };
    if args.json {
        print_json(out, &report)?;
    } else {
        writeln!(
            out,
            "accuracy {:.4} ({}/{}) at threshold {}",
            report.accuracy, report.n_correct, report.n_total, report.threshold
        )?;
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct FilterOutput {
    #[serde(flatten)]
    pub report: FilterReport,
    pub keywords: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled: Option<usize>,
}

pub fn cmd_filter(args: &FilterArgs, out: &mut dyn Write) -> Result<FilterOutput> {
    let rows = read_pairs(&args.pairs)?;
    let mut dict = MedicalDictionary::parse(&read_text(&args.dict)?).with_context(|| format!("in dictionary {}", args.dict.display()))?;
    if let Some(p) = &args.tags_from {
        let loaded = load_qa_records(open(p)?)?;
        dict = tag_keywords(&loaded.records, &dict);
    }
    let keywords = dict.terms().len();
    let extractor = EntityExtractor::new(dict).context("no dictionary terms to filter with")?;
    let (kept, report) = filter_medical(&rows, &extractor);
    let (written, sampled) = match args.sample {
        Some(n) => {
            let s = sample_balanced(&kept, n, args.seed)?;
            let len = s.len();
            (s, Some(len))
        }
        None => (kept, None),
    };
    if let Some(p) = &args.out {
        let mut w = create(p)?;
        serialize_pairs(&written, &mut w)?;
        w.flush()?;
    }
    let output = FilterOutput { report, keywords, sampled };
    if args.json {
        print_json(out, &output)?;
    } else {
        writeln!(out, "kept {} of {} rows", output.report.rows_kept, output.report.rows_read)?;
        if let Some(n) = output.sampled {
            writeln!(out, "sampled {n} balanced rows")?;
        }
    }
    Ok(output)
}

pub fn cmd_query(args: &QueryArgs, out: &mut dyn Write) -> Result<medqa_core::router::ChatAnswer> {
    let snapshot = args.stack.load()?;
    let answer = snapshot.answer(&args.text);
    if args.json {
        print_json(out, &answer)?;
    } else {
        writeln!(out, "[{}] {}", serde_json::to_value(answer.source)?.as_str().unwrap_or("?"), answer.text)?;
        for a in answer.alternatives.iter().skip(1) {
            writeln!(out, "  ({:.3}) {}", a.similarity, a.question)?;
        }
    }
    Ok(answer)
}

pub fn cmd_toy_data(args: &ToyDataArgs, out: &mut dyn Write) -> Result<()> {
    std::fs::create_dir_all(&args.dir).with_context(|| format!("cannot create {}", args.dir.display()))?;
    let rows: Vec<QuoraRow> = toy_corpus(args.seed)
        .into_iter()
        .enumerate()
        .map(|(i, p)| QuoraRow {
            id: i as u64,
            qid1: 2 * i as u64,
            qid2: 2 * i as u64 + 1,
            question1: p.q1,
            question2: p.q2,
            is_duplicate: p.label,
        })
        .collect();
    let pairs = args.dir.join("toy_pairs.tsv");
    let mut w = create(&pairs)?;
    serialize_pairs(&rows, &mut w)?;
    w.flush()?;

    let vectors = args.dir.join("toy_vectors.txt");
    let mut w = create(&vectors)?;
    write_vectors(&toy_vectors(args.dim, args.seed), &toy_vocabulary(), &mut w)?;
    w.flush()?;

    let config = TrainConfig {
        epochs: 50,
        embedding_dim: args.dim,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let toml_path = args.dir.join("toy_train.toml");
    std::fs::write(&toml_path, toml::to_string(&config)?).with_context(|| format!("cannot write {}", toml_path.display()))?;
    writeln!(out, "wrote {}, {}, {}", pairs.display(), vectors.display(), toml_path.display())?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train(a) => cmd_train(&a, &mut out).map(drop),
        Command::Eval(a) => cmd_eval(&a, &mut out).map(drop),
        Command::Filter(a) => cmd_filter(&a, &mut out).map(drop),
        Command::Query(a) => cmd_query(&a, &mut out).map(drop),
        Command::ToyData(a) => cmd_toy_data(&a, &mut out),
        Command::Serve(a) => {
            drop(out);
            let snapshot = a.stack.load()?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(crate::service::serve(snapshot, a.bind))
        }
    }
}
