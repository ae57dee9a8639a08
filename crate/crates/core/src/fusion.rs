//! Reciprocal-rank fusion and Rocchio pseudo-relevance feedback.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dense::{EmbeddingVector, VectorIndex};
use crate::error::{Error, Result};
use crate::ranking::Ranking;

pub const DEFAULT_RRF_K: f64 = 5.0;
/// Sparse/dense weights, in that order.
pub const DEFAULT_WRRF_WEIGHTS: [f64; 2] = [0.1, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrfConfig {
    pub k: f64,
}

impl Default for RrfConfig {
    fn default() -> Self {
        RrfConfig { k: DEFAULT_RRF_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrrfConfig {
    pub k: f64,
    pub weights: Vec<f64>,
}

impl Default for WrrfConfig {
    fn default() -> Self {
        WrrfConfig {
            k: DEFAULT_RRF_K,
            weights: DEFAULT_WRRF_WEIGHTS.to_vec(),
        }
    }
}

impl RrfConfig {
    pub fn validate(&self) -> Result<()> {
        check_k(self.k)
    }
}

impl WrrfConfig {
    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config("wRRF weights must be non-negative"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("wRRF weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("fusion constant k must be > 0, got {k}")))
    }
}

fn common_query(rankings: &[Ranking]) -> Result<String> {
    if rankings.len() < 2 {
        return Err(Error::config("fusion needs at least two rankings"));
    }
    let q = &rankings[0].query_id;
    for r in &rankings[1..] {
        if &r.query_id != q {
            return Err(Error::QueryMismatch(q.clone(), r.query_id.clone()));
        }
    }
    Ok(q.clone())
}

fn fuse_weighted(rankings: &[Ranking], k: f64, weights: &[f64]) -> Result<Ranking> {
    let query = common_query(rankings)?;
    let mut fused: BTreeMap<&str, f64> = BTreeMap::new();
    for (ranking, &w) in rankings.iter().zip(weights) {
        // a zero-weight ranking contributes no candidates either
        if w == 0.0 {
            continue;
        }
        for (pos, id) in ranking.ids().enumerate() {
            *fused.entry(id).or_insert(0.0) += w / (k + (pos + 1) as f64);
        }
    }
    Ok(Ranking::from_scores(query, fused, usize::MAX))
}

/// `Σ_m 1/(k + rank_m(d))` over the rankings that contain `d`.
pub fn rrf_fuse(rankings: &[Ranking], cfg: RrfConfig) -> Result<Ranking> {
    check_k(cfg.k)?;
    fuse_weighted(rankings, cfg.k, &vec![1.0; rankings.len()])
}

/// `Σ_m w_m/(k + rank_m(d))`; weights are positional, one per ranking.
pub fn wrrf_fuse(rankings: &[Ranking], cfg: &WrrfConfig) -> Result<Ranking> {
    cfg.validate()?;
    if cfg.weights.len() != rankings.len() {
        return Err(Error::config(format!(
            "{} weights for {} rankings",
            cfg.weights.len(),
            rankings.len()
        )));
    }
    fuse_weighted(rankings, cfg.k, &cfg.weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RocchioConfig {
    pub alpha: f64,
    pub beta: f64,
    pub feedback_k: usize,
}

impl Default for RocchioConfig {
    fn default() -> Self {
        RocchioConfig {
            alpha: 1.0,
            beta: 0.5,
            feedback_k: 5,
        }
    }
}

/// `normalize(α·q + β·mean(top-k feedback vectors))`, with no negative term.
pub fn rocchio_expand(
    query: &EmbeddingVector,
    initial: &Ranking,
    index: &VectorIndex,
    cfg: RocchioConfig,
) -> Result<EmbeddingVector> {
    if cfg.feedback_k == 0 {
        return Err(Error::config("feedback_k must be at least 1"));
    }
    if initial.is_empty() {
        return Err(Error::config("Rocchio needs a non-empty initial ranking"));
    }
    if cfg.beta == 0.0 && cfg.alpha > 0.0 {
        // normalize(α·q) is q itself; skip the rounding of a second division
        return Ok(query.clone());
    }
    let dim = query.dim();
    let mut centroid = vec![0.0; dim];
    let feedback: Vec<&str> = initial.ids().take(cfg.feedback_k).collect();
    for id in &feedback {
        let v = index.get(id).ok_or_else(|| Error::MissingVector(id.to_string()))?;
        if v.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
        for (c, x) in centroid.iter_mut().zip(v.values()) {
            *c += x;
        }
    }
    let n = feedback.len() as f64;
    let moved = query
        .values()
        .iter()
        .zip(&centroid)
        .map(|(q, c)| cfg.alpha * q + cfg.beta * c / n)
        .collect();
    EmbeddingVector::new(moved)
}
