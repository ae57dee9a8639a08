//! Structure-aware retrieval for corpora whose documents cite each other.
//!
//! The crate covers the whole path from a line-delimited corpus to metric
//! reports: a citation graph built from explicit links and textual
//! references, sparse (BM25 / TF-IDF) and dense (exhaustive cosine)
//! retrieval, reciprocal-rank fusion, Rocchio feedback, structure-aware
//! reranking over the citation graph, and a multiple-choice safety
//! protocol that checks whether answer models abstain when evidence is
//! withheld.

pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod graph;
pub mod harness;
pub mod lexical;
pub mod ranking;
pub mod sar;
pub mod synth;

pub use error::{Error, Result};
pub use ranking::{Ranking, Scored};
