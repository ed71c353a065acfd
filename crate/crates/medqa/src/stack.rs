//! Loading the answering stack from files, and the immutable snapshot the
//! CLI and the service answer from.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use medqa_core::corpus::{load_qa_records, QaRecord};
use medqa_core::embeddings::{load_vectors_infer_dim, EmbeddingTable};
use medqa_core::entity::{IntentRules, MedicalDictionary};
use medqa_core::graph::KnowledgeGraph;
use medqa_core::model_io::load_model;
use medqa_core::router::{route, ChatAnswer, CorpusSearch, EmptyCorpus, KnowledgeBase, QaIndex, RouterConfig};
use medqa_core::similarity::SimilarityModel;

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn load_vectors_file(path: &Path) -> Result<EmbeddingTable> {
    load_vectors_infer_dim(open(path)?).with_context(|| format!("in vectors file {}", path.display()))
}

/// Load a model file and wrap it with `table` (its OOV seed is taken from the model).
pub fn load_model_file(path: &Path, table: EmbeddingTable) -> Result<SimilarityModel> {
    let saved = load_model(open(path)?).with_context(|| format!("in model file {}", path.display()))?;
    let table = table.with_oov_seed(saved.oov_seed);
    Ok(SimilarityModel::new(saved.params, table, saved.max_seq_length)?)
}

/// File inputs shared by `query` and `serve`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct StackArgs {
    /// Knowledge graph, JSON lines.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Extra disease/symptom dictionary (`[diseases]` / `[symptoms]` sections).
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Intent rules replacing the built-in table.
    #[arg(long)]
    pub intents: Option<PathBuf>,
    /// Word vectors (needed by --model and the fuzzy entity fallback).
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Trained similarity model.
    #[arg(long, requires = "vectors")]
    pub model: Option<PathBuf>,
    /// QA records, JSON lines (needs --model to be searchable).
    #[arg(long)]
    pub qa: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    #[arg(long, default_value_t = 0.0)]
    pub similarity_floor: f64,
    #[arg(long, default_value_t = 0.8)]
    pub fuzzy_floor: f64,
    /// Skip the knowledge graph and always search the corpus.
    #[arg(long)]
    pub no_kg: bool,
}

impl StackArgs {
    pub fn router_config(&self) -> Result<RouterConfig> {
        let config = RouterConfig {
            top_k: self.top_k,
            kg_enabled: !self.no_kg,
            similarity_floor: self.similarity_floor,
            fuzzy_floor: self.fuzzy_floor,
            ..RouterConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(&self) -> Result<Snapshot> {
        let graph = match &self.graph {
            Some(p) => KnowledgeGraph::import(open(p)?).with_context(|| format!("in graph file {}", p.display()))?,
            None => KnowledgeGraph::new(),
        };
        let dict = match &self.dict {
            Some(p) => MedicalDictionary::parse(&read_text(p)?).with_context(|| format!("in dictionary {}", p.display()))?,
            None => MedicalDictionary::default(),
        };
        let intents = match &self.intents {
            Some(p) => IntentRules::parse(&read_text(p)?).with_context(|| format!("in intent rules {}", p.display()))?,
            None => IntentRules::builtin().clone(),
        };
        let vectors = self.vectors.as_deref().map(load_vectors_file).transpose()?;
        let (model, vectors) = match (&self.model, vectors) {
            (Some(p), Some(table)) => (Some(load_model_file(p, table)?), None),
            (Some(_), None) => bail!("--model needs --vectors"),
            (None, v) => (None, v),
        };
        let records = match &self.qa {
            Some(p) => {
                let loaded = load_qa_records(open(p)?)?;
                for e in &loaded.errors {
                    eprintln!("warning: {} line {}: {}", p.display(), e.line, e.message);
                }
                loaded.records
            }
            None => Vec::new(),
        };
        if !records.is_empty() && model.is_none() {
            eprintln!("warning: QA records loaded without --model; corpus search is disabled");
        }
        Snapshot::new(Parts {
            graph,
            dict,
            intents,
            model: model.map(Arc::new),
            vectors: vectors.map(Arc::new),
            records,
            config: self.router_config()?,
        })
    }
}

/// Everything a snapshot is built from.
pub struct Parts {
    pub graph: KnowledgeGraph,
    pub dict: MedicalDictionary,
    pub intents: IntentRules,
    pub model: Option<Arc<SimilarityModel>>,
    /// Vectors for fuzzy matching when there is no model (a model brings its own).
    pub vectors: Option<Arc<EmbeddingTable>>,
    pub records: Vec<QaRecord>,
    pub config: RouterConfig,
}

/// One consistent view of graph, model and corpus. Never mutated; updates
/// build a new snapshot with a higher version.
pub struct Snapshot {
    pub version: u64,
    pub kb: KnowledgeBase,
    pub dict: Arc<MedicalDictionary>,
    pub model: Option<Arc<SimilarityModel>>,
    pub vectors: Option<Arc<EmbeddingTable>>,
    pub records: Arc<Vec<QaRecord>>,
    pub corpus: Option<Arc<QaIndex>>,
    pub config: RouterConfig,
}

impl Snapshot {
    pub fn new(parts: Parts) -> Result<Snapshot> {
        let table = parts.model.as_ref().map(|m| &m.table).or(parts.vectors.as_deref());
        let kb = KnowledgeBase::new(parts.graph, &parts.dict, table, parts.intents);
        let corpus = match &parts.model {
            Some(m) if !parts.records.is_empty() => Some(Arc::new(QaIndex::build(m.clone(), parts.records.clone())?)),
            _ => None,
        };
        Ok(Snapshot {
            version: 0,
            kb,
            dict: Arc::new(parts.dict),
            model: parts.model,
            vectors: parts.vectors,
            records: Arc::new(parts.records),
            corpus,
            config: parts.config,
        })
    }

    pub fn table(&self) -> Option<&EmbeddingTable> {
        self.model.as_ref().map(|m| &m.table).or(self.vectors.as_deref())
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        self.kb.graph()
    }

    pub fn answer(&self, question: &str) -> ChatAnswer {
        let corpus: &dyn CorpusSearch = match &self.corpus {
            Some(c) => c.as_ref(),
            None => &EmptyCorpus,
        };
        route(question, &self.kb, self.table(), corpus, &self.config)
    }

    /// Same model and corpus over a new graph.
    pub fn with_graph(&self, graph: KnowledgeGraph) -> Snapshot {
        let kb = KnowledgeBase::new(graph, &self.dict, self.table(), self.kb.intents().clone());
        Snapshot {
            version: self.version + 1,
            kb,
            dict: self.dict.clone(),
            model: self.model.clone(),
            vectors: self.vectors.clone(),
            records: self.records.clone(),
            corpus: self.corpus.clone(),
            config: self.config.clone(),
        }
    }

    /// Swap in a new model; the corpus is re-encoded with it.
    pub fn with_model(&self, model: SimilarityModel) -> Result<Snapshot> {
        let model = Arc::new(model);
        let corpus = if self.records.is_empty() {
            None
        } else {
            Some(Arc::new(QaIndex::build(model.clone(), self.records.as_ref().clone())?))
        };
        let kb = KnowledgeBase::new(self.graph().clone(), &self.dict, Some(&model.table), self.kb.intents().clone());
        Ok(Snapshot {
            version: self.version + 1,
            kb,
            dict: self.dict.clone(),
            model: Some(model),
            vectors: None,
            records: self.records.clone(),
            corpus,
            config: self.config.clone(),
        })
    }
}
