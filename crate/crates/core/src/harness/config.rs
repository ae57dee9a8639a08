//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dense::ProviderSpec;
use crate::error::{Error, Result};
use crate::eval::{ContextMode, DEFAULT_CUTOFFS};
use crate::fusion::{RocchioConfig, DEFAULT_RRF_K, DEFAULT_WRRF_WEIGHTS};
use crate::graph::{load_patterns, RefPattern, RefPatternSpec};
use crate::lexical::{Bm25Params, TokenizerConfig};
use crate::sar::SarConfig;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SFS_SEED";

/// A first-stage retriever. Fusion inputs are retrievers themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RetrieverSpec {
    Bm25,
    Tfidf,
    Dense,
    Rocchio(RocchioConfig),
    Rrf {
        #[serde(default = "default_k")]
        k: f64,
        #[serde(default = "default_inputs")]
        inputs: Vec<RetrieverSpec>,
    },
    Wrrf {
        #[serde(default = "default_k")]
        k: f64,
        #[serde(default = "default_weights")]
        weights: Vec<f64>,
        #[serde(default = "default_inputs")]
        inputs: Vec<RetrieverSpec>,
    },
}

fn default_k() -> f64 {
    DEFAULT_RRF_K
}

fn default_weights() -> Vec<f64> {
    DEFAULT_WRRF_WEIGHTS.to_vec()
}

fn default_inputs() -> Vec<RetrieverSpec> {
    vec![RetrieverSpec::Bm25, RetrieverSpec::Dense]
}

impl RetrieverSpec {
    pub fn needs_dense(&self) -> bool {
        match self {
            RetrieverSpec::Bm25 | RetrieverSpec::Tfidf => false,
            RetrieverSpec::Dense | RetrieverSpec::Rocchio(_) => true,
            RetrieverSpec::Rrf { inputs, .. } | RetrieverSpec::Wrrf { inputs, .. } => {
                inputs.iter().any(RetrieverSpec::needs_dense)
            }
        }
    }

    /// Scores are cosines, so the SAR score map applies.
    pub fn is_cosine(&self) -> bool {
        matches!(self, RetrieverSpec::Dense | RetrieverSpec::Rocchio(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub retriever: RetrieverSpec,
    #[serde(default)]
    pub sar: Option<SarConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    /// Safety runs only: one row per item and mode.
    pub items_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetySpec {
    pub modes: Vec<ContextMode>,
    /// Parallel answer-model clients.
    pub concurrency: usize,
    pub timeout_ms: u64,
    /// Extra attempts after a transport failure.
    pub retries: usize,
}

impl Default for SafetySpec {
    fn default() -> Self {
        SafetySpec {
            modes: ContextMode::ALL.to_vec(),
            concurrency: 1,
            timeout_ms: 60_000,
            retries: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub qa: Option<PathBuf>,
    #[serde(default)]
    pub mcq: Option<PathBuf>,
    /// Prebuilt citation graph (JSONL edges); built from the corpus otherwise.
    #[serde(default)]
    pub graph: Option<PathBuf>,
    #[serde(default)]
    pub patterns: Vec<RefPatternSpec>,
    #[serde(default)]
    pub patterns_file: Option<PathBuf>,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub provider: Option<ProviderSpec>,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<usize>,
    /// Fusion inputs are cut to this depth; defaults to the largest cutoff.
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub safety: SafetySpec,
}

fn default_cutoffs() -> Vec<usize> {
    DEFAULT_CUTOFFS.to_vec()
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("run config: {e}")))
    }

    /// Reads a config file, resolves relative paths against its directory
    /// and applies the seed override from the environment.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus);
        for p in [&mut self.qa, &mut self.mcq, &mut self.graph, &mut self.patterns_file]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        let out = &mut self.output;
        for p in [&mut out.json, &mut out.csv, &mut out.items_csv].into_iter().flatten() {
            resolve(base, p);
        }
        if let Some(ProviderSpec::Precomputed { path }) = &mut self.provider {
            let mut p = PathBuf::from(&*path);
            resolve(base, &mut p);
            *path = p.to_string_lossy().into_owned();
        }
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() || self.cutoffs[0] == 0 || self.cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("cutoffs must be positive and strictly increasing"));
        }
        if self.depth == Some(0) {
            return Err(Error::config("depth must be at least 1"));
        }
        self.bm25.validate()?;
        let mut names = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !names.insert(m.name.as_str()) {
                return Err(Error::config(format!("duplicate method name {:?}", m.name)));
            }
            validate_retriever(&m.retriever)?;
            if m.retriever.needs_dense() && self.provider.is_none() {
                return Err(Error::config(format!("method {:?} needs a provider", m.name)));
            }
            if let Some(sar) = &m.sar {
                sar.validate()?;
                if !m.retriever.is_cosine() {
                    return Err(Error::config(format!(
                        "method {:?}: reranking applies to dense or rocchio retrievers only",
                        m.name
                    )));
                }
            }
        }
        if self.safety.concurrency == 0 {
            return Err(Error::config("safety concurrency must be at least 1"));
        }
        if self.safety.modes.is_empty() {
            return Err(Error::config("safety needs at least one context mode"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.depth
            .unwrap_or_else(|| *self.cutoffs.last().expect("validated cutoffs"))
    }

    pub fn compiled_patterns(&self) -> Result<Vec<RefPattern>> {
        let mut out = self
            .patterns
            .iter()
            .map(RefPattern::from_spec)
            .collect::<Result<Vec<_>>>()?;
        if let Some(path) = &self.patterns_file {
            out.extend(load_patterns(path)?);
        }
        Ok(out)
    }
}

fn validate_retriever(spec: &RetrieverSpec) -> Result<()> {
    match spec {
        RetrieverSpec::Rocchio(cfg) if cfg.feedback_k == 0 => {
            Err(Error::config("rocchio feedback_k must be at least 1"))
        }
        RetrieverSpec::Rrf { k, inputs } => {
            crate::fusion::RrfConfig { k: *k }.validate()?;
            check_inputs(inputs)
        }
        RetrieverSpec::Wrrf { k, weights, inputs } => {
            crate::fusion::WrrfConfig {
                k: *k,
                weights: weights.clone(),
            }
            .validate()?;
            if weights.len() != inputs.len() {
                return Err(Error::config(format!(
                    "{} weights for {} fusion inputs",
                    weights.len(),
                    inputs.len()
                )));
            }
            check_inputs(inputs)
        }
        _ => Ok(()),
    }
}

fn check_inputs(inputs: &[RetrieverSpec]) -> Result<()> {
    if inputs.len() < 2 {
        return Err(Error::config("fusion needs at least two inputs"));
    }
    inputs.iter().try_for_each(validate_retriever)
}
