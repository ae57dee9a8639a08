use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::{ndcg_at_k, recall_at_k};
use crate::error::Result;
use crate::ranking::Ranking;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryMetrics {
    pub qid: String,
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    /// Retrieved ids up to the largest cutoff.
    pub retrieved: Vec<String>,
}

impl QueryMetrics {
    pub fn compute(ranking: &Ranking, gold: &BTreeSet<String>, cutoffs: &[usize]) -> Result<Self> {
        let mut recall = BTreeMap::new();
        let mut ndcg = BTreeMap::new();
        for &k in cutoffs {
            recall.insert(k, recall_at_k(ranking, gold, k)?);
            ndcg.insert(k, ndcg_at_k(ranking, gold, k)?);
        }
        let depth = cutoffs.iter().copied().max().unwrap_or(0);
        Ok(QueryMetrics {
            qid: ranking.query_id.clone(),
            recall,
            ndcg,
            retrieved: ranking.ids().take(depth).map(str::to_string).collect(),
        })
    }
}

/// Per-query metrics and their means for one retrieval method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub query_count: usize,
    pub cutoffs: Vec<usize>,
    pub mean_recall: BTreeMap<usize, f64>,
    pub mean_ndcg: BTreeMap<usize, f64>,
    pub per_query: Vec<QueryMetrics>,
}

impl MethodReport {
    pub fn new(method: impl Into<String>, cutoffs: &[usize], per_query: Vec<QueryMetrics>) -> Self {
        let n = per_query.len();
        let mean = |pick: &dyn Fn(&QueryMetrics) -> &BTreeMap<usize, f64>| {
            cutoffs
                .iter()
                .map(|&k| {
                    let sum: f64 = per_query.iter().map(|q| pick(q)[&k]).sum();
                    (k, if n == 0 { 0.0 } else { sum / n as f64 })
                })
                .collect::<BTreeMap<_, _>>()
        };
        MethodReport {
            method: method.into(),
            query_count: n,
            cutoffs: cutoffs.to_vec(),
            mean_recall: mean(&|q| &q.recall),
            mean_ndcg: mean(&|q| &q.ndcg),
            per_query,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalReport {
    /// False when the run aborted; `methods` then holds what finished.
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub methods: Vec<MethodReport>,
}

impl RetrievalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// One row per method × metric × cutoff, values in percent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,metric,cutoff,value\n");
        for m in &self.methods {
            for (metric, values) in [("recall", &m.mean_recall), ("ndcg", &m.mean_ndcg)] {
                for (k, v) in values {
                    // + 0.0 folds a negative zero into 0
                    let _ = writeln!(out, "{},{metric},{k},{:.4}", csv_field(&m.method), v * 100.0 + 0.0);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_and_csv() {
        let gold: BTreeSet<String> = ["a".to_string()].into();
        let r1 = Ranking::from_scores("q1", [("a", 1.0), ("b", 0.5)], 10);
        let r2 = Ranking::from_scores("q2", [("b", 1.0), ("a", 0.5)], 10);
        let per = vec![
            QueryMetrics::compute(&r1, &gold, &[1, 2]).unwrap(),
            QueryMetrics::compute(&r2, &gold, &[1, 2]).unwrap(),
        ];
        let m = MethodReport::new("dense", &[1, 2], per.clone());
        assert_eq!(m.mean_recall[&1], 0.5);
        assert_eq!(m.mean_recall[&2], 1.0);
        // brute-force mean
        let nd2 = (per[0].ndcg[&2] + per[1].ndcg[&2]) / 2.0;
        assert_eq!(m.mean_ndcg[&2], nd2);

        let report = RetrievalReport {
            complete: true,
            error: None,
            seed: 0,
            methods: vec![m],
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("method,metric,cutoff,value\n"));
        assert!(csv.contains("dense,recall,1,50.0000\n"));
        assert_eq!(csv.lines().count(), 1 + 4);
        assert!(report.to_json().contains("\"complete\": true"));
    }

    #[test]
    fn misses_print_as_plain_zero() {
        let gold: BTreeSet<String> = ["z".to_string()].into();
        let r = Ranking::from_scores("q", [("a", 1.0)], 10);
        let per = vec![QueryMetrics::compute(&r, &gold, &[1]).unwrap()];
        let report = RetrievalReport {
            complete: true,
            error: None,
            seed: 0,
            methods: vec![MethodReport::new("m", &[1], per)],
        };
        let csv = report.to_csv();
        assert!(csv.contains("m,ndcg,1,0.0000\n"), "{csv}");
        assert!(!csv.contains('-'));
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
