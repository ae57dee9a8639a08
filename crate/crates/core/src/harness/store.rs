//! On-disk index files.
//!
//! Line 1 is a header `{"magic":"sfs-index","version":1,"kind":...}`.
//! Sparse files follow it with one JSON object holding the tokenizer, the
//! BM25 parameters and the inverted index. Dense files follow it with
//! `{"provider":...}` and then one `{"id","vec"}` line per document.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::{ProviderSpec, VectorIndex};
use crate::error::{Error, Result};
use crate::lexical::{Bm25Params, InvertedIndex, TokenizerConfig};

pub const INDEX_MAGIC: &str = "sfs-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Bm25,
    Tfidf,
    Dense,
}

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    kind: IndexKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    pub tokenizer: TokenizerConfig,
    pub bm25: Bm25Params,
    pub index: InvertedIndex,
}

#[derive(Serialize, Deserialize)]
struct DenseHeader {
    provider: ProviderSpec,
}

#[derive(Debug, Clone)]
pub enum StoredIndex {
    /// Scored with BM25 or TF-IDF, as `kind` says.
    Sparse { kind: IndexKind, sparse: SparseIndex },
    /// `provider` embeds queries at search time.
    Dense { provider: ProviderSpec, vectors: VectorIndex },
}

fn format_error(msg: impl Into<String>) -> Error {
    Error::IndexFormat(msg.into())
}

impl StoredIndex {
    pub fn kind(&self) -> IndexKind {
        match self {
            StoredIndex::Sparse { kind, .. } => *kind,
            StoredIndex::Dense { .. } => IndexKind::Dense,
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| format_error(e.to_string());
        let header = Header {
            magic: INDEX_MAGIC.into(),
            version: INDEX_VERSION,
            kind: self.kind(),
        };
        out.write_all(json_line(&header).as_bytes()).map_err(io)?;
        match self {
            StoredIndex::Sparse { sparse, .. } => {
                out.write_all(json_line(sparse).as_bytes()).map_err(io)?;
            }
            StoredIndex::Dense { provider, vectors } => {
                let h = DenseHeader {
                    provider: provider.clone(),
                };
                out.write_all(json_line(&h).as_bytes()).map_err(io)?;
                vectors.write_jsonl(&mut out).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| format_error(format!("missing {what}")))?
                .map_err(|e| format_error(e.to_string()))
        };
        let header: Header = serde_json::from_str(&next("header")?)
            .map_err(|e| format_error(format!("bad header: {e}")))?;
        if header.magic != INDEX_MAGIC {
            return Err(format_error(format!("not an index file (magic {:?})", header.magic)));
        }
        if header.version != INDEX_VERSION {
            return Err(format_error(format!("unsupported index version {}", header.version)));
        }
        match header.kind {
            kind @ (IndexKind::Bm25 | IndexKind::Tfidf) => {
                let sparse: SparseIndex = serde_json::from_str(&next("sparse body")?)
                    .map_err(|e| format_error(format!("bad sparse body: {e}")))?;
                Ok(StoredIndex::Sparse { kind, sparse })
            }
            IndexKind::Dense => {
                let h: DenseHeader = serde_json::from_str(&next("dense header")?)
                    .map_err(|e| format_error(format!("bad dense header: {e}")))?;
                let mut rest = String::new();
                for l in lines {
                    rest.push_str(&l.map_err(|e| format_error(e.to_string()))?);
                    rest.push('\n');
                }
                let vectors = VectorIndex::read_jsonl(rest.as_bytes())?;
                Ok(StoredIndex::Dense {
                    provider: h.provider,
                    vectors,
                })
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f))
    }
}

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("serializable");
    s.push('\n');
    s
}
