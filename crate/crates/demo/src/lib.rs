//! Browser bindings for a few sfs-core operations. Each export takes plain
//! values and returns a JSON string; the inner functions are ordinary Rust so
//! they can be tested natively.

use serde_json::json;
use wasm_bindgen::prelude::*;

use sfs_core::fusion::{rrf_fuse, wrrf_fuse, RrfConfig, WrrfConfig};
use sfs_core::harness::gap::GapBench;
use sfs_core::lexical::jamo::syllable_index;
use sfs_core::lexical::{Tokenizer, TokenizerConfig};
use sfs_core::ranking::Ranking;
use sfs_core::sar::SarConfig;
use sfs_core::synth::PlantedGapConfig;

/// Tokens of `text`, plus the jamo indexes of every Hangul syllable in it.
pub fn tokenize_json(text: &str, jamo: bool) -> Result<String, String> {
    let tokenizer = Tokenizer::new(TokenizerConfig {
        jamo_decompose: jamo,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let syllables: Vec<_> = text
        .chars()
        .filter_map(|c| {
            syllable_index(c).map(|j| json!({"char": c.to_string(), "lead": j.lead, "vowel": j.vowel, "trail": j.trail}))
        })
        .collect();
    let tokens = tokenizer.tokenize(text);
    let escaped: Vec<String> = tokens.iter().map(|t| t.escape_unicode().to_string()).collect();
    Ok(json!({"tokens": tokens, "escaped": escaped, "syllables": syllables}).to_string())
}

/// Whitespace- or comma-separated ids in rank order.
fn ranking_from_list(list: &str) -> Ranking {
    let ids: Vec<&str> = list.split([',', ' ', '\n', '\t']).filter(|s| !s.is_empty()).collect();
    let n = ids.len() as f64;
    Ranking::from_scores("query", ids.into_iter().enumerate().map(|(i, id)| (id, n - i as f64)), usize::MAX)
}

fn entries(r: &Ranking) -> serde_json::Value {
    r.entries().iter().map(|e| json!({"id": e.id, "score": e.score})).collect()
}

/// RRF and wRRF fusion of a sparse and a dense ranking.
pub fn fuse_json(sparse: &str, dense: &str, k: f64, w_sparse: f64) -> Result<String, String> {
    let inputs = [ranking_from_list(sparse), ranking_from_list(dense)];
    let rrf = rrf_fuse(&inputs, RrfConfig { k }).map_err(|e| e.to_string())?;
    let wrrf = wrrf_fuse(
        &inputs,
        &WrrfConfig {
            k,
            weights: vec![w_sparse, 1.0 - w_sparse],
        },
    )
    .map_err(|e| e.to_string())?;
    Ok(json!({"rrf": entries(&rrf), "wrrf": entries(&wrrf)}).to_string())
}

/// Recall@`cutoff` on a small planted-gap corpus for each β in `betas`,
/// with the dense baseline first.
pub fn sar_sweep_json(docs: usize, queries: usize, betas: &[f64], cutoff: usize, seed: u64) -> Result<String, String> {
    let cfg = PlantedGapConfig {
        docs,
        queries,
        seed,
        ..Default::default()
    };
    let bench = GapBench::hashing(&cfg, 256, seed).map_err(|e| e.to_string())?;
    let dense = bench.recall(None, cutoff).map_err(|e| e.to_string())?;
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let sar = SarConfig {
            beta,
            ..Default::default()
        };
        rows.push(json!({"beta": beta, "recall": bench.recall(Some(&sar), cutoff).map_err(|e| e.to_string())?}));
    }
    Ok(json!({"cutoff": cutoff, "dense": dense, "sar": rows}).to_string())
}

#[wasm_bindgen]
pub fn tokenize(text: &str, jamo: bool) -> Result<String, JsValue> {
    tokenize_json(text, jamo).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn fuse(sparse: &str, dense: &str, k: f64, w_sparse: f64) -> Result<String, JsValue> {
    fuse_json(sparse, dense, k, w_sparse).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sar_sweep(docs: usize, queries: usize, betas: Vec<f64>, cutoff: usize, seed: u64) -> Result<String, JsValue> {
    sar_sweep_json(docs, queries, &betas, cutoff, seed).map_err(|e| JsValue::from_str(&e))
}
