//! Dense retrieval: unit vectors, exact cosine search and kNN graphs.

pub(crate) mod provider;

pub use provider::{
    Embedder, EmbeddingProvider, ExternalProvider, HashingEmbedder, PrecomputedVectors,
    ProviderSpec,
};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::graph::{DiGraph, Edge, Similarity, SimilarityGraph};
use crate::ranking::Ranking;

/// Finite, L2-normalized embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length. Rejects empty, non-finite and
    /// all-zero input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("embedding has zero dimensions"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("embedding has non-finite entries"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::config("embedding is the zero vector"));
        }
        Ok(EmbeddingVector(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        EmbeddingVector::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Dot product of two unit vectors, summed in index order so that
/// `cosine_sim(a, b) == cosine_sim(b, a)` bit for bit.
pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum())
}

/// Maps a cosine in [-1, 1] onto [0, 1].
pub fn cosine_to_unit(c: f64) -> f64 {
    ((c + 1.0) / 2.0).clamp(0.0, 1.0)
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorRecord {
    id: String,
    vec: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    vectors: BTreeMap<String, EmbeddingVector>,
    dim: usize,
}

impl VectorIndex {
    pub fn from_vectors(entries: impl IntoIterator<Item = (String, EmbeddingVector)>) -> Result<Self> {
        let mut vectors = BTreeMap::new();
        let mut dim = None;
        for (id, v) in entries {
            let d = *dim.get_or_insert(v.dim());
            if v.dim() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    actual: v.dim(),
                });
            }
            if vectors.insert(id.clone(), v).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        let dim = dim.ok_or(Error::EmptyCorpus)?;
        Ok(VectorIndex { vectors, dim })
    }

    /// Embeds every document's text (keyed by document id).
    pub fn build(corpus: &Corpus, embedder: &mut dyn Embedder) -> Result<Self> {
        let items: Vec<(&str, &str)> = corpus
            .documents()
            .map(|d| (d.id.as_str(), d.text.as_str()))
            .collect();
        let vecs = embedder.embed_keyed(&items)?;
        Self::from_vectors(items.iter().map(|(id, _)| id.to_string()).zip(vecs))
    }

    /// Reads `{"id": str, "vec": [float]}` lines.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: VectorRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let v = EmbeddingVector::new(rec.vec).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push((rec.id, v));
        }
        Self::from_vectors(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, v) in &self.vectors {
            serde_json::to_writer(
                &mut out,
                &VectorRecord {
                    id: id.clone(),
                    vec: v.0.clone(),
                },
            )?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Cosine of `query` against every stored vector, in id order.
    pub fn scan(&self, query: &EmbeddingVector) -> Result<Vec<(&str, f64)>> {
        if query.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        self.vectors
            .iter()
            .map(|(id, v)| Ok((id.as_str(), cosine_sim(query, v)?)))
            .collect()
    }

    /// Exact top-`top_n` by cosine, ties by ascending id.
    pub fn knn_search(&self, query_id: &str, query: &EmbeddingVector, top_n: usize) -> Result<Ranking> {
        Ok(Ranking::from_scores(query_id, self.scan(query)?, top_n))
    }
}

/// Directed edges from every node to its `k` most similar other nodes.
pub fn build_knn_graph(index: &VectorIndex, k: usize) -> Result<SimilarityGraph> {
    if k == 0 || k >= index.len() {
        return Err(Error::config(format!(
            "kNN graph needs 1 <= k < {} (index size), got {k}",
            index.len()
        )));
    }
    let mut edges = Vec::with_capacity(index.len() * k);
    for (id, v) in index.iter() {
        let scores = index.scan(v)?.into_iter().filter(|(other, _)| *other != id);
        let ranked = Ranking::from_scores(id, scores, k);
        edges.extend(ranked.ids().map(|dst| Edge {
            src: id.to_string(),
            dst: dst.to_string(),
            kind: Similarity::Similarity,
        }));
    }
    Ok(DiGraph::from_edges(
        index.iter().map(|(id, _)| id.to_string()),
        edges,
    ))
}
