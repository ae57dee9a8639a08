use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tokenizer;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::ranking::Ranking;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::config(format!(
                "bm25 needs k1 > 0 and b in [0, 1], got k1={} b={}",
                self.k1, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: String,
    pub tf: u32,
}

/// Term → postings sorted by document id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: BTreeMap<String, u32>,
    avg_doc_length: f64,
    doc_count: usize,
    /// L2 norms of ltc TF-IDF document vectors.
    tfidf_norms: BTreeMap<String, f64>,
}

fn idf_bm25(n: f64, df: f64) -> f64 {
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

fn log_tf(tf: u32) -> f64 {
    1.0 + (tf as f64).ln()
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus, tokenizer: &Tokenizer) -> Result<Self> {
        Self::from_token_lists(
            corpus
                .documents()
                .map(|d| (d.id.clone(), tokenizer.tokenize(&d.text))),
        )
    }

    /// Builds from pre-tokenized documents. Ids must be unique.
    pub fn from_token_lists(docs: impl IntoIterator<Item = (String, Vec<String>)>) -> Result<Self> {
        let mut postings: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for (id, tokens) in docs {
            if doc_lengths.insert(id.clone(), tokens.len() as u32).is_some() {
                return Err(Error::DuplicateId(id));
            }
            for t in tokens {
                *postings.entry(t).or_default().entry(id.clone()).or_insert(0) += 1;
            }
        }
        if doc_lengths.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let doc_count = doc_lengths.len();
        let avg_doc_length =
            doc_lengths.values().map(|&l| l as f64).sum::<f64>() / doc_count as f64;
        let postings: BTreeMap<String, Vec<Posting>> = postings
            .into_iter()
            .map(|(term, docs)| {
                let list = docs.into_iter().map(|(doc, tf)| Posting { doc, tf }).collect();
                (term, list)
            })
            .collect();

        let n = doc_count as f64;
        let mut sq: BTreeMap<String, f64> = doc_lengths.keys().map(|k| (k.clone(), 0.0)).collect();
        for list in postings.values() {
            let idf = (n / list.len() as f64).ln();
            for p in list {
                let w = log_tf(p.tf) * idf;
                *sq.get_mut(&p.doc).expect("indexed doc") += w * w;
            }
        }
        let tfidf_norms = sq.into_iter().map(|(k, v)| (k, v.sqrt())).collect();

        Ok(InvertedIndex {
            postings,
            doc_lengths,
            avg_doc_length,
            doc_count,
            tfidf_norms,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, id: &str) -> Option<u32> {
        self.doc_lengths.get(id).copied()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Okapi BM25 with `ln((N − df + 0.5)/(df + 0.5) + 1)` IDF. Repeated
    /// query terms contribute once per occurrence.
    pub fn bm25_search(
        &self,
        query_id: &str,
        query_terms: &[String],
        params: Bm25Params,
        top_n: usize,
    ) -> Ranking {
        let n = self.doc_count as f64;
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        for term in query_terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = idf_bm25(n, list.len() as f64);
            for p in list {
                let dl = self.doc_lengths[&p.doc] as f64;
                let tf = p.tf as f64;
                let norm = params.k1 * (1.0 - params.b + params.b * dl / self.avg_doc_length);
                *scores.entry(&p.doc).or_insert(0.0) += idf * tf * (params.k1 + 1.0) / (tf + norm);
            }
        }
        Ranking::from_scores(query_id, scores, top_n)
    }

    /// Cosine similarity of ltc-weighted vectors: `(1 + ln tf) · ln(N/df)`
    /// for both query and documents.
    pub fn tfidf_search(&self, query_id: &str, query_terms: &[String], top_n: usize) -> Ranking {
        let n = self.doc_count as f64;
        let mut qtf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in query_terms {
            if !self.postings(t).is_empty() {
                *qtf.entry(t).or_insert(0) += 1;
            }
        }
        let mut q_norm = 0.0;
        let mut dots: BTreeMap<&str, f64> = BTreeMap::new();
        for (term, &tf) in &qtf {
            let list = self.postings(term);
            let idf = (n / list.len() as f64).ln();
            let qw = log_tf(tf) * idf;
            q_norm += qw * qw;
            for p in list {
                *dots.entry(&p.doc).or_insert(0.0) += qw * log_tf(p.tf) * idf;
            }
        }
        let q_norm = q_norm.sqrt();
        let scores = dots.into_iter().map(|(doc, dot)| {
            let d_norm = self.tfidf_norms[doc];
            let s = if q_norm > 0.0 && d_norm > 0.0 {
                dot / (q_norm * d_norm)
            } else {
                0.0
            };
            (doc, s)
        });
        Ranking::from_scores(query_id, scores, top_n)
    }
}
