//! Recall study on a planted-gap corpus: dense retrieval against dense
//! plus structure-aware reranking, and explicit citations against a
//! cosine kNN graph as one-hop bridges.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::dense::{build_knn_graph, Embedder, EmbeddingVector, HashingEmbedder, VectorIndex};
use crate::eval::{one_hop_hit_rate, recall_at_k};
use crate::error::Result;
use crate::graph::{build_graph, CitationGraph};
use crate::ranking::Ranking;
use crate::sar::{sar_rerank, SarConfig, ScoreMap};
use crate::synth::{article_pattern, planted_gap, PlantedCorpus, PlantedGapConfig};

pub struct GapBench {
    pub planted: PlantedCorpus,
    pub graph: CitationGraph,
    pub index: VectorIndex,
    /// Exhaustive cosine rankings, one per query.
    pub dense: Vec<Ranking>,
    gold: Vec<BTreeSet<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitRates {
    pub explicit: f64,
    pub knn: f64,
}

impl GapBench {
    pub fn new(cfg: &PlantedGapConfig, embedder: &mut dyn Embedder) -> Result<Self> {
        let planted = planted_gap(cfg)?;
        let (graph, _) = build_graph(&planted.corpus, &[article_pattern()]);
        let index = VectorIndex::build(&planted.corpus, embedder)?;
        let keyed: Vec<(&str, &str)> = planted
            .qa
            .iter()
            .map(|q| (q.qid.as_str(), q.question.as_str()))
            .collect();
        let vectors: Vec<EmbeddingVector> = embedder.embed_keyed(&keyed)?;
        let dense = planted
            .qa
            .iter()
            .zip(&vectors)
            .map(|(q, v)| index.knn_search(&q.qid, v, usize::MAX))
            .collect::<Result<Vec<_>>>()?;
        let gold = planted
            .qa
            .iter()
            .map(|q| q.matched_doc_ids.iter().cloned().collect())
            .collect();
        Ok(GapBench {
            planted,
            graph,
            index,
            dense,
            gold,
        })
    }

    /// Seeded hashing embeddings.
    pub fn hashing(cfg: &PlantedGapConfig, dim: usize, seed: u64) -> Result<Self> {
        Self::new(cfg, &mut HashingEmbedder::new(dim, seed)?)
    }

    /// Mean recall@`cutoff` of the dense rankings, reranked when `sar` is set.
    pub fn recall(&self, sar: Option<&SarConfig>, cutoff: usize) -> Result<f64> {
        let mut total = 0.0;
        for (dense, gold) in self.dense.iter().zip(&self.gold) {
            let ranking = match sar {
                Some(cfg) => {
                    let cfg = SarConfig {
                        score_map: ScoreMap::Cosine,
                        ..*cfg
                    };
                    sar_rerank(dense, &self.graph, &cfg)?
                }
                None => dense.clone(),
            };
            total += recall_at_k(&ranking, gold, cutoff)?;
        }
        Ok(total / self.dense.len().max(1) as f64)
    }

    /// One-hop hit rates from the top `seeds` dense results to the gold
    /// documents, over the citation graph and over a kNN graph.
    pub fn hit_rates(&self, seeds: usize, knn_k: usize) -> Result<HitRates> {
        let queries: Vec<(Vec<String>, Vec<String>)> = self
            .dense
            .iter()
            .zip(&self.gold)
            .map(|(r, g)| {
                (
                    r.ids().take(seeds).map(str::to_string).collect(),
                    g.iter().cloned().collect(),
                )
            })
            .collect();
        let knn = build_knn_graph(&self.index, knn_k)?;
        Ok(HitRates {
            explicit: one_hop_hit_rate(&queries, &self.graph),
            knn: one_hop_hit_rate(&queries, &knn),
        })
    }
}
