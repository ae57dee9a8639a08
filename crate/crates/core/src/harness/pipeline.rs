//! Retrieval runs: methods × queries → metric reports.

use std::collections::BTreeSet;
use std::path::Path;

use crate::corpus::{load_corpus, load_qa, Corpus, QaPair};
use crate::dense::{Embedder, EmbeddingProvider, EmbeddingVector, VectorIndex};
use crate::error::{Error, Result};
use crate::eval::{MethodReport, QueryMetrics, RetrievalReport};
use crate::fusion::{rocchio_expand, rrf_fuse, wrrf_fuse, RrfConfig, WrrfConfig};
use crate::graph::{build_graph, CitationGraph};
use crate::lexical::{Bm25Params, InvertedIndex, Tokenizer};
use crate::ranking::Ranking;
use crate::sar::{sar_rerank, SarConfig, ScoreMap};

use super::config::{MethodSpec, RetrieverSpec, RunConfig};

pub struct QueryInput {
    pub qid: String,
    pub text: String,
    /// Required by dense retrievers.
    pub vector: Option<EmbeddingVector>,
}

/// Indexes and graph shared by every method of a run.
pub struct Engine {
    pub tokenizer: Tokenizer,
    pub bm25: Bm25Params,
    pub sparse: Option<InvertedIndex>,
    pub dense: Option<VectorIndex>,
    pub graph: Option<CitationGraph>,
}

impl Engine {
    fn sparse(&self) -> Result<&InvertedIndex> {
        self.sparse
            .as_ref()
            .ok_or_else(|| Error::config("this retriever needs a sparse index"))
    }

    fn dense(&self) -> Result<&VectorIndex> {
        self.dense
            .as_ref()
            .ok_or_else(|| Error::config("this retriever needs a dense index"))
    }

    fn query_vector<'q>(&self, q: &'q QueryInput) -> Result<&'q EmbeddingVector> {
        q.vector
            .as_ref()
            .ok_or_else(|| Error::MissingVector(q.qid.clone()))
    }

    /// Top `depth` results of one retriever.
    pub fn retrieve(&self, spec: &RetrieverSpec, q: &QueryInput, depth: usize) -> Result<Ranking> {
        match spec {
            RetrieverSpec::Bm25 => {
                let terms = self.tokenizer.tokenize(&q.text);
                Ok(self.sparse()?.bm25_search(&q.qid, &terms, self.bm25, depth))
            }
            RetrieverSpec::Tfidf => {
                let terms = self.tokenizer.tokenize(&q.text);
                Ok(self.sparse()?.tfidf_search(&q.qid, &terms, depth))
            }
            RetrieverSpec::Dense => self.dense()?.knn_search(&q.qid, self.query_vector(q)?, depth),
            RetrieverSpec::Rocchio(cfg) => {
                let index = self.dense()?;
                let v = self.query_vector(q)?;
                let initial = index.knn_search(&q.qid, v, cfg.feedback_k)?;
                let moved = rocchio_expand(v, &initial, index, *cfg)?;
                index.knn_search(&q.qid, &moved, depth)
            }
            RetrieverSpec::Rrf { k, inputs } => {
                let runs = self.retrieve_all(inputs, q, depth)?;
                Ok(rrf_fuse(&runs, RrfConfig { k: *k })?.truncated(depth))
            }
            RetrieverSpec::Wrrf { k, weights, inputs } => {
                let runs = self.retrieve_all(inputs, q, depth)?;
                let cfg = WrrfConfig {
                    k: *k,
                    weights: weights.clone(),
                };
                Ok(wrrf_fuse(&runs, &cfg)?.truncated(depth))
            }
        }
    }

    fn retrieve_all(&self, specs: &[RetrieverSpec], q: &QueryInput, depth: usize) -> Result<Vec<Ranking>> {
        specs.iter().map(|s| self.retrieve(s, q, depth)).collect()
    }

    /// Retriever plus optional reranking. The reranker sees the exhaustive
    /// cosine ranking, mapped to [0, 1].
    pub fn run(&self, retriever: &RetrieverSpec, sar: Option<&SarConfig>, q: &QueryInput, depth: usize) -> Result<Ranking> {
        let Some(sar) = sar else {
            return self.retrieve(retriever, q, depth);
        };
        if !retriever.is_cosine() {
            return Err(Error::config("reranking applies to dense or rocchio retrievers only"));
        }
        let graph = self
            .graph
            .as_ref()
            .ok_or_else(|| Error::config("reranking needs a citation graph"))?;
        let full = self.retrieve(retriever, q, usize::MAX)?;
        let cfg = SarConfig {
            score_map: ScoreMap::Cosine,
            ..*sar
        };
        Ok(sar_rerank(&full, graph, &cfg)?.truncated(depth))
    }

    pub fn run_method(&self, method: &MethodSpec, q: &QueryInput, depth: usize) -> Result<Ranking> {
        self.run(&method.retriever, method.sar.as_ref(), q, depth)
    }
}

/// Everything a retrieval run reads from disk.
pub struct RetrievalInputs {
    pub corpus: Corpus,
    pub qa: Vec<QaPair>,
    pub graph: CitationGraph,
}

impl RetrievalInputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let corpus = load_corpus(&cfg.corpus)?;
        let qa_path = cfg
            .qa
            .as_ref()
            .ok_or_else(|| Error::config("retrieval runs need a qa file"))?;
        let qa = load_qa(qa_path, &corpus)?;
        let graph = match &cfg.graph {
            Some(path) => {
                let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                CitationGraph::read_jsonl(
                    std::io::BufReader::new(f),
                    corpus.ids().map(str::to_string),
                )?
            }
            None => build_graph(&corpus, &cfg.compiled_patterns()?).0,
        };
        Ok(RetrievalInputs { corpus, qa, graph })
    }
}

/// Runs every configured method over every query.
///
/// Input and configuration problems are errors. Failures once the run has
/// started (a provider dying, say) yield a report with `complete == false`
/// that keeps the methods already finished.
pub fn run_retrieval(cfg: &RunConfig, inputs: RetrievalInputs) -> Result<RetrievalReport> {
    cfg.validate()?;
    let RetrievalInputs { corpus, qa, graph } = inputs;
    let tokenizer = Tokenizer::new(cfg.tokenizer.clone())?;
    let sparse = InvertedIndex::build(&corpus, &tokenizer)?;
    let mut engine = Engine {
        tokenizer,
        bm25: cfg.bm25,
        sparse: Some(sparse),
        dense: None,
        graph: Some(graph),
    };
    let mut report = RetrievalReport {
        complete: true,
        error: None,
        seed: cfg.seed,
        methods: Vec::new(),
    };
    let mut queries: Vec<QueryInput> = qa
        .iter()
        .map(|q| QueryInput {
            qid: q.qid.clone(),
            text: q.question.clone(),
            vector: None,
        })
        .collect();
    let depth = cfg.depth();
    for method in &cfg.methods {
        let step = (|| -> Result<MethodReport> {
            if method.retriever.needs_dense() && engine.dense.is_none() {
                let spec = cfg.provider.as_ref().expect("validated provider");
                let mut provider = EmbeddingProvider::open(spec, cfg.seed)?;
                engine.dense = Some(VectorIndex::build(&corpus, &mut provider)?);
                embed_queries(&mut provider, &mut queries)?;
            }
            let mut per_query = Vec::with_capacity(qa.len());
            for (pair, q) in qa.iter().zip(&queries) {
                let ranking = engine.run_method(method, q, depth)?;
                let gold: BTreeSet<String> = pair.matched_doc_ids.iter().cloned().collect();
                per_query.push(QueryMetrics::compute(&ranking, &gold, &cfg.cutoffs)?);
            }
            Ok(MethodReport::new(&method.name, &cfg.cutoffs, per_query))
        })();
        match step {
            Ok(m) => report.methods.push(m),
            Err(e) => {
                report.complete = false;
                report.error = Some(format!("method {:?}: {e}", method.name));
                break;
            }
        }
    }
    Ok(report)
}

fn embed_queries(provider: &mut dyn Embedder, queries: &mut [QueryInput]) -> Result<()> {
    let keyed: Vec<(&str, &str)> = queries
        .iter()
        .map(|q| (q.qid.as_str(), q.text.as_str()))
        .collect();
    let vectors = provider.embed_keyed(&keyed)?;
    if vectors.len() != queries.len() {
        return Err(Error::config(format!(
            "provider returned {} query vectors for {} queries",
            vectors.len(),
            queries.len()
        )));
    }
    for (q, v) in queries.iter_mut().zip(vectors) {
        q.vector = Some(v);
    }
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the JSON and CSV outputs named in the config.
pub fn write_retrieval_outputs(report: &RetrievalReport, cfg: &RunConfig) -> Result<()> {
    if let Some(p) = &cfg.output.json {
        write_text(p, &report.to_json())?;
    }
    if let Some(p) = &cfg.output.csv {
        write_text(p, &report.to_csv())?;
    }
    Ok(())
}
