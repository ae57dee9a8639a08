//! Corpus and QA dataset loading.
//!
//! All three files are line-delimited JSON (one object per line, UTF-8).
//! Blank lines are skipped; every other line must parse.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One atomic retrieval unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    /// Hierarchy labels from the statute down to the unit itself.
    #[serde(default)]
    pub path: Vec<String>,
    pub text: String,
    /// Explicit outgoing citations.
    #[serde(default)]
    pub links: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub doc_count: usize,
    pub avg_char_length: f64,
    pub avg_word_count: f64,
    pub avg_out_links: f64,
}

impl CorpusStats {
    fn compute<'a>(docs: impl ExactSizeIterator<Item = &'a Document>) -> Self {
        let n = docs.len();
        if n == 0 {
            return CorpusStats::default();
        }
        let (mut chars, mut words, mut links) = (0usize, 0usize, 0usize);
        for d in docs {
            chars += d.text.chars().count();
            words += d.text.split_whitespace().count();
            links += d.links.len();
        }
        let n_f = n as f64;
        CorpusStats {
            doc_count: n,
            avg_char_length: chars as f64 / n_f,
            avg_word_count: words as f64 / n_f,
            avg_out_links: links as f64 / n_f,
        }
    }
}

/// Immutable id → document mapping; iteration order is ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: BTreeMap<String, Document>,
    stats: CorpusStats,
}

impl Corpus {
    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self> {
        let mut documents = BTreeMap::new();
        for doc in docs {
            if doc.id.is_empty() {
                return Err(Error::InvalidRecord {
                    qid: String::new(),
                    reason: "document id is empty".into(),
                });
            }
            if documents.contains_key(&doc.id) {
                return Err(Error::DuplicateId(doc.id));
            }
            documents.insert(doc.id.clone(), doc);
        }
        let stats = CorpusStats::compute(documents.values());
        Ok(Corpus { documents, stats })
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.documents.contains_key(id)
    }

    pub fn documents(&self) -> impl ExactSizeIterator<Item = &Document> {
        self.documents.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.keys().map(String::as_str)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for doc in self.documents.values() {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DanglingLink {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub dangling: Vec<DanglingLink>,
    pub empty_texts: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.dangling.is_empty() && self.empty_texts.is_empty()
    }
}

/// Lists dangling link targets and empty-text documents. Never fails.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    for doc in corpus.documents() {
        if doc.text.trim().is_empty() {
            report.empty_texts.push(doc.id.clone());
        }
        for target in &doc.links {
            if !corpus.contains(target) {
                report.dangling.push(DanglingLink {
                    source: doc.id.clone(),
                    target: target.clone(),
                });
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub qid: String,
    pub question: String,
    pub gold_answer: String,
    pub matched_doc_ids: Vec<String>,
    #[serde(default)]
    pub related_doc_ids: Vec<String>,
}

/// Two-document multiple-choice question.
///
/// Option indexes are 0-based positions into `options`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub qid: String,
    pub question: String,
    pub options: Vec<String>,
    pub abstain_index: usize,
    pub answer_full: usize,
    pub answer_partial: usize,
    pub doc_a_id: String,
    pub doc_b_id: String,
}

impl McqItem {
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        let reject = |reason: String| Error::InvalidRecord {
            qid: self.qid.clone(),
            reason,
        };
        let n = self.options.len();
        if n < 2 {
            return Err(reject(format!("needs at least 2 options, has {n}")));
        }
        for (name, idx) in [
            ("abstain_index", self.abstain_index),
            ("answer_full", self.answer_full),
            ("answer_partial", self.answer_partial),
        ] {
            if idx >= n {
                return Err(reject(format!("{name} {idx} out of range for {n} options")));
            }
        }
        if self.answer_partial != self.abstain_index {
            return Err(reject(format!(
                "answer_partial {} must equal abstain_index {}",
                self.answer_partial, self.abstain_index
            )));
        }
        if self.doc_a_id == self.doc_b_id {
            return Err(reject("doc_a_id and doc_b_id are identical".into()));
        }
        for id in [&self.doc_a_id, &self.doc_b_id] {
            if !corpus.contains(id) {
                return Err(reject(format!("unresolvable document id {id:?}")));
            }
        }
        Ok(())
    }
}

impl QaPair {
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        if self.matched_doc_ids.is_empty() {
            return Err(Error::InvalidRecord {
                qid: self.qid.clone(),
                reason: "matched_doc_ids is empty".into(),
            });
        }
        for id in self.matched_doc_ids.iter().chain(&self.related_doc_ids) {
            if !corpus.contains(id) {
                return Err(Error::InvalidRecord {
                    qid: self.qid.clone(),
                    reason: format!("unresolvable document id {id:?}"),
                });
            }
        }
        Ok(())
    }
}

fn parse_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    Corpus::from_documents(parse_jsonl::<Document, _>(reader)?)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus(open(path.as_ref())?)
}

pub fn read_qa<R: BufRead>(reader: R, corpus: &Corpus) -> Result<Vec<QaPair>> {
    let items: Vec<QaPair> = parse_jsonl(reader)?;
    check_unique(items.iter().map(|q| q.qid.as_str()))?;
    for item in &items {
        item.validate(corpus)?;
    }
    Ok(items)
}

pub fn load_qa(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Vec<QaPair>> {
    read_qa(open(path.as_ref())?, corpus)
}

pub fn read_mcq<R: BufRead>(reader: R, corpus: &Corpus) -> Result<Vec<McqItem>> {
    let items: Vec<McqItem> = parse_jsonl(reader)?;
    check_unique(items.iter().map(|q| q.qid.as_str()))?;
    for item in &items {
        item.validate(corpus)?;
    }
    Ok(items)
}

pub fn load_mcq(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Vec<McqItem>> {
    read_mcq(open(path.as_ref())?, corpus)
}

fn check_unique<'a>(qids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for qid in qids {
        if !seen.insert(qid) {
            return Err(Error::InvalidRecord {
                qid: qid.to_string(),
                reason: "duplicate qid".into(),
            });
        }
    }
    Ok(())
}

/// Writes any serializable records as line-delimited JSON.
pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
