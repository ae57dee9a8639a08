//! Embedding providers.
//!
//! # Hashing recipe
//!
//! [`HashingEmbedder`] is a pure function of `(text, seed, dim)`; any
//! implementation following these steps reproduces it bit for bit:
//!
//! 1. Lowercase the text (Unicode), split on whitespace and re-join with
//!    single spaces, then pad with one space on each side.
//! 2. Take every window of three consecutive characters (code points). If
//!    the padded text has fewer than three characters, it is the only gram.
//! 3. For each gram, `h = splitmix64(fnv1a64(utf8(gram)) ^ seed)` with
//!    wrapping 64-bit arithmetic.
//! 4. Add `+1` to bucket `h % dim` when bit 63 of `h` is clear, `-1` when set.
//! 5. Convert the integer buckets to f64, compute the norm as the square
//!    root of the sum of squares accumulated in bucket order, and divide
//!    each bucket by it. An all-zero accumulator becomes the unit vector on
//!    bucket 0.
//!
//! # Stream protocol
//!
//! [`ExternalProvider`] talks newline-delimited JSON with a child process:
//! `{"op":"info"}` → `{"dim":int,"name":str}` and
//! `{"op":"embed","id":int,"texts":[str]}` → `{"id":int,"vectors":[[float]]}`.
//! A response carrying `"error"` fails the request.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EmbeddingVector, VectorIndex};
use crate::error::{Error, Result};

pub trait Embedder {
    fn dim(&self) -> usize;

    fn name(&self) -> String;

    /// One unit vector per text, in input order.
    fn embed(&mut self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;

    /// Embeds `(key, text)` pairs. Providers keyed by id override this.
    fn embed_keyed(&mut self, items: &[(&str, &str)]) -> Result<Vec<EmbeddingVector>> {
        let texts: Vec<&str> = items.iter().map(|(_, t)| *t).collect();
        self.embed(&texts)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded character-trigram hashing embedder. See the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("hashing embedder needs dim >= 1"));
        }
        Ok(HashingEmbedder { dim, seed })
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let lowered = text.to_lowercase();
        let mut padded: Vec<char> = vec![' '];
        for (i, word) in lowered.split_whitespace().enumerate() {
            if i > 0 {
                padded.push(' ');
            }
            padded.extend(word.chars());
        }
        padded.push(' ');

        let mut acc = vec![0i64; self.dim];
        let mut add = |gram: &[char]| {
            let s: String = gram.iter().collect();
            let h = splitmix64(fnv1a64(s.as_bytes()) ^ self.seed);
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 0 { 1 } else { -1 };
        };
        if padded.len() < 3 {
            add(&padded);
        } else {
            padded.windows(3).for_each(&mut add);
        }

        let mut values: Vec<f64> = acc.into_iter().map(|x| x as f64).collect();
        let norm = values.iter().fold(0.0, |s, v| s + v * v).sqrt();
        if norm == 0.0 {
            values[0] = 1.0;
        } else {
            for v in &mut values {
                *v /= norm;
            }
        }
        // already unit length; bypass re-normalization to keep the recipe exact
        EmbeddingVector(values)
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> String {
        format!("hashing-trigram-d{}-s{}", self.dim, self.seed)
    }

    fn embed(&mut self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Vectors read from a file, looked up by key (document or query id).
#[derive(Debug, Clone)]
pub struct PrecomputedVectors {
    index: VectorIndex,
}

impl PrecomputedVectors {
    pub fn new(index: VectorIndex) -> Self {
        PrecomputedVectors { index }
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }
}

impl Embedder for PrecomputedVectors {
    fn dim(&self) -> usize {
        self.index.dim()
    }

    fn name(&self) -> String {
        "precomputed".into()
    }

    fn embed(&mut self, _texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Err(Error::config(
            "precomputed vectors are looked up by id; raw text cannot be embedded",
        ))
    }

    fn embed_keyed(&mut self, items: &[(&str, &str)]) -> Result<Vec<EmbeddingVector>> {
        items
            .iter()
            .map(|(key, _)| {
                self.index
                    .get(key)
                    .cloned()
                    .ok_or_else(|| Error::MissingVector(key.to_string()))
            })
            .collect()
    }
}

/// A child process speaking the NDJSON embedding protocol. One request is
/// in flight at a time.
pub struct ExternalProvider {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: usize,
    dim: usize,
    name: String,
}

pub(crate) struct LineChannel {
    pub child: Child,
    pub stdin: ChildStdin,
    pub lines: Receiver<std::io::Result<String>>,
}

/// Spawns `command` through the shell with piped standard streams; stdout
/// lines are forwarded by a reader thread so reads can time out.
pub(crate) fn spawn_line_process(command: &str) -> Result<LineChannel> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::Transport {
            request: 0,
            message: format!("spawning {command:?}: {e}"),
        })?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    Ok(LineChannel {
        child,
        stdin,
        lines: rx,
    })
}

pub(crate) fn request_line(
    stdin: &mut ChildStdin,
    lines: &Receiver<std::io::Result<String>>,
    timeout: Duration,
    request: usize,
    payload: &Value,
) -> Result<Value> {
    let transport = |message: String| Error::Transport { request, message };
    let mut line = serde_json::to_string(payload).expect("json value");
    line.push('\n');
    stdin
        .write_all(line.as_bytes())
        .and_then(|_| stdin.flush())
        .map_err(|e| transport(format!("write failed: {e}")))?;
    let reply = match lines.recv_timeout(timeout) {
        Ok(Ok(l)) => l,
        Ok(Err(e)) => return Err(transport(format!("read failed: {e}"))),
        Err(RecvTimeoutError::Timeout) => return Err(transport(format!("no reply within {timeout:?}"))),
        Err(RecvTimeoutError::Disconnected) => return Err(transport("provider closed its output".into())),
    };
    let value: Value =
        serde_json::from_str(&reply).map_err(|e| transport(format!("malformed reply: {e}")))?;
    if let Some(err) = value.get("error") {
        return Err(transport(format!("provider error: {err}")));
    }
    Ok(value)
}

impl ExternalProvider {
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let LineChannel { child, stdin, lines } = spawn_line_process(command)?;
        // constructed first so that Drop reaps the child on a failed handshake
        let mut p = ExternalProvider {
            child,
            stdin,
            lines,
            timeout,
            next_id: 1,
            dim: 0,
            name: String::new(),
        };
        let info = request_line(&mut p.stdin, &p.lines, timeout, 0, &json!({"op": "info"}))?;
        p.dim = info
            .get("dim")
            .and_then(Value::as_u64)
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Transport {
                request: 0,
                message: "info reply lacks a positive integer dim".into(),
            })? as usize;
        p.name = info
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or("external")
            .to_string();
        Ok(p)
    }
}

impl Drop for ExternalProvider {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Embedder for ExternalProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> String {
        self.name.clone()
    }

    fn embed(&mut self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let id = self.next_id;
        self.next_id += 1;
        let reply = request_line(
            &mut self.stdin,
            &self.lines,
            self.timeout,
            id,
            &json!({"op": "embed", "id": id, "texts": texts}),
        )?;
        let protocol = |message: String| Error::Transport { request: id, message };
        if reply.get("id").and_then(Value::as_u64) != Some(id as u64) {
            return Err(protocol(format!("reply id mismatch: {:?}", reply.get("id"))));
        }
        let vectors: Vec<Vec<f64>> = reply
            .get("vectors")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| protocol(format!("bad vectors: {e}")))?
            .ok_or_else(|| protocol("reply lacks vectors".into()))?;
        if vectors.len() != texts.len() {
            return Err(protocol(format!(
                "expected {} vectors, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(Error::DimMismatch {
                        expected: self.dim,
                        actual: v.len(),
                    });
                }
                EmbeddingVector::new(v).map_err(|e| protocol(e.to_string()))
            })
            .collect()
    }
}

/// Declarative provider choice, as it appears in run configs and index files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderSpec {
    Hashing {
        dim: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Precomputed {
        path: String,
    },
    External {
        command: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

pub enum EmbeddingProvider {
    Hashing(HashingEmbedder),
    Precomputed(PrecomputedVectors),
    External(ExternalProvider),
}

impl EmbeddingProvider {
    /// `default_seed` applies to hashing providers without an explicit seed.
    pub fn open(spec: &ProviderSpec, default_seed: u64) -> Result<Self> {
        Ok(match spec {
            ProviderSpec::Hashing { dim, seed } => {
                EmbeddingProvider::Hashing(HashingEmbedder::new(*dim, seed.unwrap_or(default_seed))?)
            }
            ProviderSpec::Precomputed { path } => {
                EmbeddingProvider::Precomputed(PrecomputedVectors::new(VectorIndex::load(path)?))
            }
            ProviderSpec::External {
                command,
                timeout_ms,
            } => EmbeddingProvider::External(ExternalProvider::spawn(
                command,
                Duration::from_millis(*timeout_ms),
            )?),
        })
    }

    fn inner(&mut self) -> &mut dyn Embedder {
        match self {
            EmbeddingProvider::Hashing(e) => e,
            EmbeddingProvider::Precomputed(e) => e,
            EmbeddingProvider::External(e) => e,
        }
    }
}

impl Embedder for EmbeddingProvider {
    fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Hashing(e) => e.dim(),
            EmbeddingProvider::Precomputed(e) => e.dim(),
            EmbeddingProvider::External(e) => e.dim(),
        }
    }

    fn name(&self) -> String {
        match self {
            EmbeddingProvider::Hashing(e) => e.name(),
            EmbeddingProvider::Precomputed(e) => e.name(),
            EmbeddingProvider::External(e) => e.name(),
        }
    }

    fn embed(&mut self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        self.inner().embed(texts)
    }

    fn embed_keyed(&mut self, items: &[(&str, &str)]) -> Result<Vec<EmbeddingVector>> {
        self.inner().embed_keyed(items)
    }
}
