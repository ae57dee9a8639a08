//! Structure-aware reranking.
//!
//! The top dense results act as voting seeds. Each seed passes its dense
//! score to the documents it is linked to, discounted by a log penalty on
//! the seed's degree (hub seeds cite indiscriminately) and on the
//! candidate's global degree (super-hub targets are cited by everything):
//!
//! ```text
//! B(n)     = 1/L(n) · Σ_{s ∈ seeds, s→n} S_dense(s) / L(s)      L(x) = log(deg(x) + 1)
//! S_SAR(n) = S_dense(n) + β · B(n) · (1 − S_dense(n))
//! ```
//!
//! The `(1 − S_dense)` gate leaves confident documents nearly untouched and
//! lifts low-scored documents that are structurally close to the seeds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dense::cosine_to_unit;
use crate::error::{Error, Result};
use crate::graph::{CitationGraph, Direction};
use crate::ranking::Ranking;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

/// Which degree penalizes a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedDegree {
    /// Edges the seed contributes to the induced view (along `direction`).
    #[default]
    Local,
    /// The seed's out-degree in the full graph.
    Global,
}

/// How dense scores reach the [0, 1] scale the residual gate assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMap {
    /// Scores are already in [0, 1]; anything else is an error.
    #[default]
    Identity,
    /// Scores are cosines; map with `(c + 1) / 2`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SarConfig {
    pub seed_count: usize,
    pub beta: f64,
    pub direction: Direction,
    pub clamp_bonus: bool,
    pub log_base: LogBase,
    pub seed_degree: SeedDegree,
    pub score_map: ScoreMap,
}

impl Default for SarConfig {
    fn default() -> Self {
        SarConfig {
            seed_count: 10,
            beta: 0.5,
            direction: Direction::Out,
            clamp_bonus: true,
            log_base: LogBase::Natural,
            seed_degree: SeedDegree::Local,
            score_map: ScoreMap::Identity,
        }
    }
}

impl SarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed_count == 0 {
            return Err(Error::config("SAR seed_count must be at least 1"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::config(format!("SAR beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    fn penalty(&self, degree: usize) -> f64 {
        self.log_base.log(degree as f64 + 1.0)
    }
}

/// Seeds, the candidates they vote for, and the degrees used as penalties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgraphView {
    /// Top dense entries, in ranking order, with mapped scores.
    pub seeds: Vec<(String, f64)>,
    /// Candidate → seeds linked to it.
    pub candidates: BTreeMap<String, BTreeSet<String>>,
    /// Seed → degree used for its penalty.
    pub local_out_degree: BTreeMap<String, usize>,
    /// Candidate → full-graph degree along the voting direction (in-degree
    /// for `out`, out-degree for `in`, undirected degree for `both`).
    pub global_in_degree: BTreeMap<String, usize>,
}

fn mapped(dense: &Ranking, map: ScoreMap) -> Result<Ranking> {
    let r = match map {
        ScoreMap::Identity => dense.clone(),
        ScoreMap::Cosine => dense.map_scores(cosine_to_unit),
    };
    for e in r.entries() {
        if !(0.0..=1.0).contains(&e.score) {
            return Err(Error::ScoreOutOfRange {
                id: e.id.clone(),
                score: e.score,
            });
        }
    }
    Ok(r)
}

fn candidate_direction(d: Direction) -> Direction {
    match d {
        Direction::Out => Direction::In,
        Direction::In => Direction::Out,
        Direction::Both => Direction::Both,
    }
}

/// Builds the voting view from the first `seed_count` entries of `dense`.
/// Scores in `dense` must already be on the [0, 1] scale.
pub fn induce_subgraph(dense: &Ranking, graph: &CitationGraph, cfg: &SarConfig) -> Result<SubgraphView> {
    cfg.validate()?;
    if dense.is_empty() {
        return Err(Error::config("SAR needs a non-empty dense ranking"));
    }
    let mut view = SubgraphView {
        seeds: Vec::new(),
        candidates: BTreeMap::new(),
        local_out_degree: BTreeMap::new(),
        global_in_degree: BTreeMap::new(),
    };
    for e in dense.entries().iter().take(cfg.seed_count) {
        if !graph.contains(&e.id) {
            return Err(Error::UnknownNode(e.id.clone()));
        }
        view.seeds.push((e.id.clone(), e.score));
        let adjacent = graph.adjacent(&e.id, cfg.direction);
        let degree = match cfg.seed_degree {
            SeedDegree::Local => adjacent.len(),
            SeedDegree::Global => graph.degree(&e.id, Direction::Out)?,
        };
        view.local_out_degree.insert(e.id.clone(), degree);
        for n in adjacent {
            view.candidates
                .entry(n.to_string())
                .or_default()
                .insert(e.id.clone());
        }
    }
    let cand_dir = candidate_direction(cfg.direction);
    for n in view.candidates.keys() {
        view.global_in_degree
            .insert(n.clone(), graph.degree(n, cand_dir)?);
    }
    Ok(view)
}

/// `B(n)`, clamped to 1 when `cfg.clamp_bonus`.
pub fn structural_bonus(view: &SubgraphView, candidate: &str, cfg: &SarConfig) -> Result<f64> {
    let voters = view
        .candidates
        .get(candidate)
        .ok_or_else(|| Error::NotACandidate(candidate.to_string()))?;
    let mut votes = 0.0;
    for (seed, score) in &view.seeds {
        if voters.contains(seed) {
            votes += score / cfg.penalty(view.local_out_degree[seed]);
        }
    }
    let bonus = votes / cfg.penalty(view.global_in_degree[candidate]);
    Ok(if cfg.clamp_bonus { bonus.min(1.0) } else { bonus })
}

/// Reranks `dense` using the citation graph. Every candidate must appear in
/// `dense`; pass the full exhaustive ranking, or use
/// [`sar_rerank_with_lookup`] for truncated inputs.
pub fn sar_rerank(dense: &Ranking, graph: &CitationGraph, cfg: &SarConfig) -> Result<Ranking> {
    sar_rerank_with_lookup(dense, graph, cfg, |_| None)
}

/// Like [`sar_rerank`]; candidates missing from `dense` take their dense
/// score (on the input scale) from `lookup` and join the output ranking.
pub fn sar_rerank_with_lookup(
    dense: &Ranking,
    graph: &CitationGraph,
    cfg: &SarConfig,
    lookup: impl Fn(&str) -> Option<f64>,
) -> Result<Ranking> {
    cfg.validate()?;
    let base = mapped(dense, cfg.score_map)?;
    if cfg.beta == 0.0 {
        return Ok(base);
    }
    let view = induce_subgraph(&base, graph, cfg)?;
    let mut scores: BTreeMap<String, f64> = base
        .entries()
        .iter()
        .map(|e| (e.id.clone(), e.score))
        .collect();
    for candidate in view.candidates.keys() {
        let s_dense = match scores.get(candidate) {
            Some(&s) => s,
            None => {
                let raw = lookup(candidate)
                    .ok_or_else(|| Error::MissingScore(candidate.clone()))?;
                let s = match cfg.score_map {
                    ScoreMap::Identity => raw,
                    ScoreMap::Cosine => cosine_to_unit(raw),
                };
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::ScoreOutOfRange {
                        id: candidate.clone(),
                        score: s,
                    });
                }
                s
            }
        };
        let bonus = structural_bonus(&view, candidate, cfg)?;
        scores.insert(candidate.clone(), s_dense + cfg.beta * bonus * (1.0 - s_dense));
    }
    Ok(Ranking::from_scores(dense.query_id.clone(), scores, usize::MAX))
}
