use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sfs_core::corpus::{load_corpus, load_mcq, load_qa, validate_corpus, write_jsonl};
use sfs_core::dense::{Embedder, EmbeddingProvider, ProviderSpec, VectorIndex};
use sfs_core::fusion::{RocchioConfig, DEFAULT_RRF_K, DEFAULT_WRRF_WEIGHTS};
use sfs_core::graph::{build_graph, load_patterns, CitationGraph, Direction};
use sfs_core::harness::config::SEED_ENV;
use sfs_core::harness::{
    run_retrieval, run_safety_config, write_retrieval_outputs, write_safety_outputs, ClientSpec, Engine, IndexKind,
    QueryInput, RetrievalInputs, RetrieverSpec, RunConfig, SparseIndex, StoredIndex,
};
use sfs_core::lexical::{Bm25Params, InvertedIndex, Tokenizer, TokenizerConfig};
use sfs_core::sar::SarConfig;
use sfs_core::synth::{planted_gap, synthetic_mcq, PlantedGapConfig};

#[derive(Parser)]
#[command(name = "sfs", version, about = "Structure-aware retrieval and evaluation over citation-linked corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus and print its statistics.
    Ingest(IngestArgs),
    /// Build the citation graph and write it as JSONL edges.
    Graph(GraphArgs),
    /// Build a sparse or dense index file.
    Index(IndexArgs),
    /// Run one query against index files.
    Search(SearchArgs),
    /// Run the retrieval protocol described by a run config.
    Eval { config: PathBuf },
    /// Run the multiple-choice safety protocol described by a run config.
    SafetyEval(SafetyArgs),
    /// Write a synthetic planted-gap corpus, an MCQ set and sample configs.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    corpus: PathBuf,
    /// Check links and texts; also check --qa / --mcq files if given.
    #[arg(long)]
    validate: bool,
    #[arg(long)]
    qa: Option<PathBuf>,
    #[arg(long)]
    mcq: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    corpus: PathBuf,
    /// JSON array of {"pattern", "label"} reference patterns.
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Bm25,
    Tfidf,
    Dense,
}

#[derive(Args)]
struct IndexArgs {
    corpus: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Precomputed `{"id","vec"}` JSONL, keyed by document and query id.
    #[arg(long, conflicts_with = "provider")]
    vectors: Option<PathBuf>,
    /// Embedding command speaking the NDJSON protocol, or `hashing:<dim>[:<seed>]`.
    #[arg(long)]
    provider: Option<String>,
    /// Output file; defaults to `<corpus stem>.<kind>.idx` beside the corpus.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep Hangul syllables whole instead of splitting them into jamo.
    #[arg(long)]
    no_jamo: bool,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum FuseArg {
    Rrf,
    Wrrf,
}

#[derive(Args)]
struct SearchArgs {
    index: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Second index to fuse with (its ranking comes second).
    #[arg(long)]
    with: Option<PathBuf>,
    #[arg(long, value_enum, requires = "with")]
    fuse: Option<FuseArg>,
    #[arg(long, default_value_t = DEFAULT_RRF_K)]
    k: f64,
    /// wRRF weights, in index order.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Rocchio feedback as `alpha,beta,K`.
    #[arg(long)]
    rocchio: Option<String>,
    /// Structure-aware reranking as `beta,seeds,direction`.
    #[arg(long)]
    sar: Option<String>,
    /// Citation graph JSONL (from `sfs graph`), needed by --sar.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Overrides the index's embedding provider for the query.
    #[arg(long)]
    provider: Option<String>,
    /// Print JSON instead of tab-separated lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("answerer").required(true).args(["client", "mock"])))]
struct SafetyArgs {
    config: PathBuf,
    /// Answer-model command speaking the NDJSON protocol.
    #[arg(long)]
    client: Option<String>,
    /// `rule:<marker>`, `always-answer`, `option:<n>`, `random` or `scripted:<file>`.
    #[arg(long)]
    mock: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    docs: usize,
    #[arg(long, default_value_t = 50)]
    queries: usize,
    #[arg(long, default_value_t = 100)]
    mcq_items: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn env_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

fn provider_spec(arg: &str) -> Result<ProviderSpec> {
    if let Some(rest) = arg.strip_prefix("hashing:") {
        let mut parts = rest.split(':');
        let dim = parts.next().unwrap_or("").parse().context("hashing:<dim>[:<seed>] needs an integer dim")?;
        let seed = parts
            .next()
            .map(|s| s.parse::<u64>().context("hashing seed must be an integer"))
            .transpose()?;
        return Ok(ProviderSpec::Hashing { dim, seed });
    }
    Ok(ProviderSpec::External {
        command: arg.to_string(),
        timeout_ms: 60_000,
    })
}

fn ingest(args: IngestArgs) -> Result<ExitCode> {
    let corpus = load_corpus(&args.corpus)?;
    println!("{}", serde_json::to_string_pretty(corpus.stats())?);
    if !args.validate {
        return Ok(ExitCode::SUCCESS);
    }
    let report = validate_corpus(&corpus);
    let mut clean = report.is_clean();
    for d in &report.dangling {
        eprintln!("dangling link {} -> {}", d.source, d.target);
    }
    for id in &report.empty_texts {
        eprintln!("empty text {id}");
    }
    if let Some(qa) = &args.qa {
        match load_qa(qa, &corpus) {
            Ok(pairs) => eprintln!("{} QA pairs valid", pairs.len()),
            Err(e) => {
                eprintln!("qa: {e}");
                clean = false;
            }
        }
    }
    if let Some(mcq) = &args.mcq {
        match load_mcq(mcq, &corpus) {
            Ok(items) => eprintln!("{} MCQ items valid", items.len()),
            Err(e) => {
                eprintln!("mcq: {e}");
                clean = false;
            }
        }
    }
    Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn graph(args: GraphArgs) -> Result<ExitCode> {
    let corpus = load_corpus(&args.corpus)?;
    let patterns = match &args.patterns {
        Some(p) => load_patterns(p)?,
        None => Vec::new(),
    };
    let (g, report) = build_graph(&corpus, &patterns);
    let mut buf = Vec::new();
    g.write_jsonl(&mut buf)?;
    std::fs::write(&args.out, buf).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "nodes": g.node_count(),
            "edges": g.edge_count(),
            "hyperlink_edges": report.hyperlink_edges,
            "textual_edges": report.textual_edges,
            "suppressed_duplicates": report.suppressed_duplicates,
            "self_references": report.self_references,
            "unresolved": report.unresolved.len(),
        }))?
    );
    Ok(ExitCode::SUCCESS)
}

fn default_index_path(corpus: &Path, kind: &str) -> PathBuf {
    let stem = corpus.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    corpus.with_file_name(format!("{stem}.{kind}.idx"))
}

fn index(args: IndexArgs) -> Result<ExitCode> {
    let corpus = load_corpus(&args.corpus)?;
    let (stored, kind_name) = match args.kind {
        KindArg::Bm25 | KindArg::Tfidf => {
            let tokenizer = TokenizerConfig {
                jamo_decompose: !args.no_jamo,
                ..Default::default()
            };
            let bm25 = Bm25Params { k1: args.k1, b: args.b };
            bm25.validate()?;
            let index = InvertedIndex::build(&corpus, &Tokenizer::new(tokenizer.clone())?)?;
            let (kind, name) = match args.kind {
                KindArg::Bm25 => (IndexKind::Bm25, "bm25"),
                _ => (IndexKind::Tfidf, "tfidf"),
            };
            let sparse = SparseIndex { tokenizer, bm25, index };
            (StoredIndex::Sparse { kind, sparse }, name)
        }
        KindArg::Dense => {
            let spec = match (&args.vectors, &args.provider) {
                (Some(v), _) => ProviderSpec::Precomputed {
                    path: std::fs::canonicalize(v)
                        .with_context(|| format!("reading {}", v.display()))?
                        .to_string_lossy()
                        .into_owned(),
                },
                (None, Some(p)) => provider_spec(p)?,
                (None, None) => bail!("dense indexes need --vectors or --provider"),
            };
            let mut provider = EmbeddingProvider::open(&spec, env_seed()?)?;
            let vectors = VectorIndex::build(&corpus, &mut provider)?;
            // pin the seed so search embeds queries the same way
            let spec = match spec {
                ProviderSpec::Hashing { dim, seed } => ProviderSpec::Hashing {
                    dim,
                    seed: Some(seed.unwrap_or(env_seed()?)),
                },
                other => other,
            };
            (StoredIndex::Dense { provider: spec, vectors }, "dense")
        }
    };
    let out = args.out.unwrap_or_else(|| default_index_path(&args.corpus, kind_name));
    stored.save(&out)?;
    println!("wrote {} ({} documents)", out.display(), corpus.len());
    Ok(ExitCode::SUCCESS)
}

fn parse_rocchio(s: &str) -> Result<RocchioConfig> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, k] = parts.as_slice() else {
        bail!("--rocchio expects alpha,beta,K");
    };
    let cfg = RocchioConfig {
        alpha: a.parse().context("rocchio alpha")?,
        beta: b.parse().context("rocchio beta")?,
        feedback_k: k.parse().context("rocchio K")?,
    };
    if cfg.feedback_k == 0 {
        bail!("rocchio K must be at least 1");
    }
    Ok(cfg)
}

fn parse_sar(s: &str) -> Result<SarConfig> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let (beta, seeds, dir) = match parts.as_slice() {
        [b, k] => (b, k, &"out"),
        [b, k, d] => (b, k, d),
        _ => bail!("--sar expects beta,seeds[,out|in|both]"),
    };
    let direction = match *dir {
        "out" => Direction::Out,
        "in" => Direction::In,
        "both" => Direction::Both,
        other => bail!("unknown direction {other:?}"),
    };
    let cfg = SarConfig {
        beta: beta.parse().context("sar beta")?,
        seed_count: seeds.parse().context("sar seeds")?,
        direction,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn search(args: SearchArgs) -> Result<ExitCode> {
    let mut engine = Engine {
        tokenizer: Tokenizer::new(TokenizerConfig::default())?,
        bm25: Bm25Params::default(),
        sparse: None,
        dense: None,
        graph: None,
    };
    let mut provider_spec_for_query = None;
    let mut specs = Vec::new();
    for path in std::iter::once(&args.index).chain(args.with.as_ref()) {
        let stored = StoredIndex::load(path).with_context(|| format!("loading {}", path.display()))?;
        match stored {
            StoredIndex::Sparse { kind, sparse } => {
                if engine.sparse.is_some() {
                    bail!("at most one sparse index per search");
                }
                engine.tokenizer = Tokenizer::new(sparse.tokenizer)?;
                engine.bm25 = sparse.bm25;
                engine.sparse = Some(sparse.index);
                specs.push(if kind == IndexKind::Bm25 { RetrieverSpec::Bm25 } else { RetrieverSpec::Tfidf });
            }
            StoredIndex::Dense { provider, vectors } => {
                if engine.dense.is_some() {
                    bail!("at most one dense index per search");
                }
                engine.dense = Some(vectors);
                provider_spec_for_query = Some(provider);
                specs.push(RetrieverSpec::Dense);
            }
        }
    }
    if let Some(r) = &args.rocchio {
        let cfg = parse_rocchio(r)?;
        let dense = specs
            .iter_mut()
            .find(|s| **s == RetrieverSpec::Dense)
            .context("--rocchio needs a dense index")?;
        *dense = RetrieverSpec::Rocchio(cfg);
    }
    let retriever = match (args.fuse, specs.len()) {
        (None, 1) => specs.pop().expect("one spec"),
        (None, _) => bail!("two indexes given; choose --fuse rrf|wrrf"),
        (Some(FuseArg::Rrf), _) => RetrieverSpec::Rrf { k: args.k, inputs: specs },
        (Some(FuseArg::Wrrf), _) => RetrieverSpec::Wrrf {
            k: args.k,
            weights: args.weights.clone().unwrap_or_else(|| DEFAULT_WRRF_WEIGHTS.to_vec()),
            inputs: specs,
        },
    };
    let sar = args.sar.as_deref().map(parse_sar).transpose()?;
    if sar.is_some() {
        let path = args.graph.as_ref().context("--sar needs --graph")?;
        let nodes: Vec<String> = engine
            .dense
            .as_ref()
            .context("--sar needs a dense index")?
            .iter()
            .map(|(id, _)| id.to_string())
            .collect();
        let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        engine.graph = Some(CitationGraph::read_jsonl(std::io::BufReader::new(f), nodes)?);
    }

    let mut query = QueryInput {
        qid: "query".into(),
        text: args.query.clone(),
        vector: None,
    };
    if retriever.needs_dense() {
        let spec = match &args.provider {
            Some(p) => provider_spec(p)?,
            None => provider_spec_for_query.expect("dense index loaded"),
        };
        if matches!(spec, ProviderSpec::Precomputed { .. }) && args.provider.is_none() {
            bail!("this index holds precomputed vectors; pass --provider to embed the query");
        }
        let mut provider = EmbeddingProvider::open(&spec, env_seed()?)?;
        let dim = engine.dense.as_ref().map(VectorIndex::dim).unwrap_or_default();
        if provider.dim() != dim {
            bail!("provider dimension {} does not match the index ({dim})", provider.dim());
        }
        query.vector = provider.embed_keyed(&[("query", &args.query)])?.pop();
    }
    let ranking = engine.run(&retriever, sar.as_ref(), &query, args.top)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&ranking)?);
    } else {
        for (i, e) in ranking.entries().iter().enumerate() {
            println!("{}\t{}\t{:.6}", i + 1, e.id, e.score);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(config: &Path) -> Result<ExitCode> {
    let cfg = RunConfig::load(config)?;
    let inputs = RetrievalInputs::load(&cfg)?;
    let report = run_retrieval(&cfg, inputs)?;
    write_retrieval_outputs(&report, &cfg)?;
    print!("{}", report.to_csv());
    if let Some(e) = &report.error {
        eprintln!("run incomplete: {e}");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn safety_eval(args: SafetyArgs) -> Result<ExitCode> {
    let cfg = RunConfig::load(&args.config)?;
    let client = match (args.client, args.mock) {
        (Some(c), None) => ClientSpec::Command(c),
        (None, Some(m)) => ClientSpec::Mock(m),
        _ => bail!("pass exactly one of --client and --mock"),
    };
    let report = run_safety_config(&cfg, &client)?;
    write_safety_outputs(&report, &cfg)?;
    print!("{}", report.to_csv());
    let failed: usize = report.modes.iter().map(|m| m.failed).sum();
    if failed > 0 {
        eprintln!("{failed} request(s) failed after retries and were left out of the rates");
    }
    Ok(ExitCode::SUCCESS)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn synth(args: SynthArgs) -> Result<ExitCode> {
    const MARKER: &str = "[evidence]";
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let planted = planted_gap(&PlantedGapConfig {
        docs: args.docs,
        queries: args.queries,
        seed: args.seed,
        ..Default::default()
    })?;
    planted.corpus.save(dir.join("corpus.jsonl"))?;
    let mut qa = Vec::new();
    write_jsonl(&planted.qa, &mut qa)?;
    std::fs::write(dir.join("qa.jsonl"), qa)?;
    write_json(&dir.join("patterns.json"), &json!([{"pattern": r"Article (\d+)", "label": "Article {}"}]))?;

    let (mcq_corpus, items) = synthetic_mcq(args.mcq_items, 5, MARKER, args.seed)?;
    mcq_corpus.save(dir.join("mcq_corpus.jsonl"))?;
    let mut mcq = Vec::new();
    write_jsonl(&items, &mut mcq)?;
    std::fs::write(dir.join("mcq.jsonl"), mcq)?;

    write_json(
        &dir.join("retrieval.json"),
        &json!({
            "corpus": "corpus.jsonl",
            "qa": "qa.jsonl",
            "patterns_file": "patterns.json",
            "provider": {"kind": "hashing", "dim": 256},
            "cutoffs": [1, 5, 10, 20],
            "seed": args.seed,
            "methods": [
                {"name": "bm25", "retriever": {"kind": "bm25"}},
                {"name": "dense", "retriever": {"kind": "dense"}},
                {"name": "wrrf", "retriever": {"kind": "wrrf"}},
                {"name": "rocchio", "retriever": {"kind": "rocchio"}},
                {"name": "dense+sar", "retriever": {"kind": "dense"}, "sar": {"beta": 0.5, "seed_count": 10}}
            ],
            "output": {"json": "out/retrieval.json", "csv": "out/retrieval.csv"}
        }),
    )?;
    write_json(
        &dir.join("safety.json"),
        &json!({
            "corpus": "mcq_corpus.jsonl",
            "mcq": "mcq.jsonl",
            "seed": args.seed,
            "safety": {"concurrency": 4},
            "output": {"json": "out/safety.json", "csv": "out/safety.csv", "items_csv": "out/safety_items.csv"}
        }),
    )?;
    println!(
        "wrote {} documents, {} queries and {} MCQ items to {} (evidence marker {MARKER:?})",
        planted.corpus.len(),
        planted.qa.len(),
        items.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Graph(a) => graph(a),
        Command::Index(a) => index(a),
        Command::Search(a) => search(a),
        Command::Eval { config } => eval(&config),
        Command::SafetyEval(a) => safety_eval(a),
        Command::Synth(a) => synth(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
