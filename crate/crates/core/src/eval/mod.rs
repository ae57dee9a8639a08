//! Retrieval and answer metrics, plus graph diagnostics.
//!
//! Metric values are fractions in [0, 1]; reports convert to percentages
//! only when they are written out.

pub(crate) mod report;

pub use report::{MethodReport, QueryMetrics, RetrievalReport};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::McqItem;
use crate::dense::{cosine_sim, cosine_to_unit, EmbeddingVector, VectorIndex};
use crate::error::{Error, Result};
use crate::graph::{CitationGraph, DiGraph, Direction};
use crate::lexical::Tokenizer;
use crate::ranking::Ranking;

pub const DEFAULT_CUTOFFS: [usize; 7] = [1, 3, 5, 10, 20, 50, 100];

/// `|gold ∩ top-k| / |gold|`.
pub fn recall_at_k(ranking: &Ranking, gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let hits = ranking.ids().take(k).filter(|id| gold.contains(*id)).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Binary-gain nDCG with a `1/log2(rank + 1)` discount.
pub fn ndcg_at_k(ranking: &Ranking, gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranking
        .ids()
        .take(k)
        .enumerate()
        .filter(|(_, id)| gold.contains(*id))
        .map(|(i, _)| discount(i + 1))
        .fold(0.0, |a, b| a + b);
    let ideal: f64 = (1..=gold.len().min(k)).map(discount).fold(0.0, |a, b| a + b);
    Ok(if ideal > 0.0 { dcg / ideal } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1_f: f64,
    pub rouge_l_f: f64,
}

fn f1(overlap: usize, cand_len: usize, ref_len: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_len as f64;
    let r = overlap as f64 / ref_len as f64;
    2.0 * p * r / (p + r)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-1 and ROUGE-L F1 over `tokenizer` tokens. Empty input scores 0.
pub fn rouge_scores(candidate: &str, reference: &str, tokenizer: &Tokenizer) -> RougeScores {
    let c = tokenizer.tokenize(candidate);
    let r = tokenizer.tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return RougeScores {
            rouge1_f: 0.0,
            rouge_l_f: 0.0,
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &r {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0;
    for t in &c {
        if let Some(n) = counts.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    RougeScores {
        rouge1_f: f1(overlap, c.len(), r.len()),
        rouge_l_f: f1(lcs_len(&c, &r), c.len(), r.len()),
    }
}

/// Mean ROUGE over `(candidate, reference)` pairs.
pub fn mean_rouge(pairs: &[(&str, &str)], tokenizer: &Tokenizer) -> RougeScores {
    let n = pairs.len().max(1) as f64;
    let (mut r1, mut rl) = (0.0, 0.0);
    for (c, r) in pairs {
        let s = rouge_scores(c, r, tokenizer);
        r1 += s.rouge1_f;
        rl += s.rouge_l_f;
    }
    RougeScores {
        rouge1_f: r1 / n,
        rouge_l_f: rl / n,
    }
}

/// Scores a free-form answer against a reference on [0, 1]. Model-based
/// judges (embedding similarity, graded LLM verdicts) plug in here; none
/// ships with the crate because each needs an external model.
pub trait AnswerJudge {
    fn name(&self) -> &str;
    fn judge(&mut self, question: &str, candidate: &str, reference: &str) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    Zero,
    Partial,
    Full,
}

impl ContextMode {
    pub const ALL: [ContextMode; 3] = [ContextMode::Zero, ContextMode::Partial, ContextMode::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextMode::Zero => "zero",
            ContextMode::Partial => "partial",
            ContextMode::Full => "full",
        }
    }

    pub fn gold(self, item: &McqItem) -> usize {
        match self {
            ContextMode::Partial => item.answer_partial,
            ContextMode::Zero | ContextMode::Full => item.answer_full,
        }
    }
}

/// Fraction of predictions equal to the mode's gold option. `None`
/// (undecodable) counts as wrong.
pub fn mcq_accuracy(
    predictions: &BTreeMap<String, Option<usize>>,
    items: &[McqItem],
    mode: ContextMode,
) -> Result<f64> {
    let by_qid: HashMap<&str, &McqItem> = items.iter().map(|i| (i.qid.as_str(), i)).collect();
    let mut correct = 0usize;
    for (qid, pred) in predictions {
        let item = by_qid
            .get(qid.as_str())
            .ok_or_else(|| Error::UnknownQuestion(qid.clone()))?;
        if *pred == Some(mode.gold(item)) {
            correct += 1;
        }
    }
    Ok(if predictions.is_empty() {
        0.0
    } else {
        correct as f64 / predictions.len() as f64
    })
}

/// Fraction of `(seeds, gold)` queries with a direct seed → gold edge.
pub fn one_hop_hit_rate<K: Copy + Ord>(queries: &[(Vec<String>, Vec<String>)], graph: &DiGraph<K>) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let hits = queries
        .iter()
        .filter(|(seeds, gold)| {
            seeds
                .iter()
                .any(|s| gold.iter().any(|g| graph.has_edge(s, g)))
        })
        .count();
    hits as f64 / queries.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapProbe {
    /// Threshold on the [0, 1]-mapped cosine.
    pub epsilon: f64,
    pub hops: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapResult {
    pub is_gap: bool,
    pub sim: f64,
    pub reachable: bool,
}

/// A gap: the gold document is semantically far from the query yet
/// reachable from the entry document within `hops` citation steps.
pub fn gap_probe(
    query: &EmbeddingVector,
    entry: &str,
    gold: &str,
    index: &VectorIndex,
    graph: &CitationGraph,
    probe: GapProbe,
) -> Result<GapResult> {
    let gold_vec = index
        .get(gold)
        .ok_or_else(|| Error::MissingVector(gold.to_string()))?;
    let sim = cosine_to_unit(cosine_sim(query, gold_vec)?);
    let reachable = graph
        .neighbors(entry, Direction::Out, probe.hops)?
        .contains(gold);
    Ok(GapResult {
        is_gap: sim < probe.epsilon && reachable,
        sim,
        reachable,
    })
}
