//! Acceptance suite. Each check prints one PASS/FAIL line; the process
//! exits non-zero if any check fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unicode_normalization::UnicodeNormalization;

use sfs_core::corpus::{Corpus, Document};
use sfs_core::dense::{cosine_to_unit, EmbeddingVector, HashingEmbedder, VectorIndex};
use sfs_core::eval::{ndcg_at_k, recall_at_k, ContextMode};
use sfs_core::fusion::{rocchio_expand, rrf_fuse, wrrf_fuse, RocchioConfig, RrfConfig, WrrfConfig};
use sfs_core::graph::{CitationGraph, DiGraph, Edge, EdgeKind};
use sfs_core::harness::gap::GapBench;
use sfs_core::harness::safety::{run_safety, AnswerClient, MockClient, SafetyOptions, SafetyReport};
use sfs_core::lexical::{jamo, Bm25Params, InvertedIndex, Tokenizer, TokenizerConfig};
use sfs_core::sar::{sar_rerank, SarConfig, ScoreMap};
use sfs_core::synth::{synthetic_mcq, PlantedGapConfig};
use sfs_core::Ranking;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn words(rng: &mut ChaCha8Rng, vocab: &[&str], n: usize) -> String {
    (0..n).map(|_| *vocab.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

const VOCAB: &[&str] = &[
    "fire", "alarm", "sprinkler", "exit", "stair", "door", "smoke", "valve", "pump", "hose", "panel", "duct",
    "zone", "floor", "wall", "rated", "hour", "test", "inspect", "record", "owner", "permit", "shaft", "lamp",
];

// ---------------------------------------------------------------------------
// metrics

fn oracle_recall(ids: &[String], gold: &BTreeSet<String>, k: usize) -> f64 {
    let mut hits = 0;
    for (i, id) in ids.iter().enumerate() {
        if i >= k {
            break;
        }
        if gold.contains(id) {
            hits += 1;
        }
    }
    hits as f64 / gold.len() as f64
}

fn oracle_dcg(flags: &[bool], k: usize) -> f64 {
    let mut total = 0.0;
    for (i, &rel) in flags.iter().enumerate().take(k) {
        if rel {
            total += 2f64.ln() / ((i + 2) as f64).ln();
        }
    }
    total
}

fn oracle_ndcg(ids: &[String], gold: &BTreeSet<String>, k: usize) -> f64 {
    let flags: Vec<bool> = ids.iter().map(|id| gold.contains(id)).collect();
    let ideal = vec![true; gold.len()];
    let idcg = oracle_dcg(&ideal, k);
    if idcg == 0.0 {
        0.0
    } else {
        oracle_dcg(&flags, k) / idcg
    }
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0f64;
    for case in 0..200 {
        let pool = rng.gen_range(1..40);
        let mut ids: Vec<String> = (0..pool).map(|i| format!("d{i}")).collect();
        ids.shuffle(&mut rng);
        ids.truncate(rng.gen_range(0..=pool));
        let gold: BTreeSet<String> = (0..rng.gen_range(1..8))
            .map(|_| format!("d{}", rng.gen_range(0..pool + 5)))
            .collect();
        let n = ids.len();
        let ranking = Ranking::from_scores(
            "q",
            ids.iter().enumerate().map(|(i, id)| (id.clone(), (n - i) as f64)),
            usize::MAX,
        );
        for k in [1, 2, 3, 5, 10, 20, 50, 100] {
            let r = recall_at_k(&ranking, &gold, k).map_err(|e| e.to_string())?;
            let d = ndcg_at_k(&ranking, &gold, k).map_err(|e| e.to_string())?;
            let (ro, dd) = (oracle_recall(&ids, &gold, k), oracle_ndcg(&ids, &gold, k));
            worst = worst.max((r - ro).abs()).max((d - dd).abs());
            ensure(close(r, ro, 1e-12) && close(d, dd, 1e-12), || {
                format!("case {case} k={k}: recall {r} vs {ro}, ndcg {d} vs {dd}")
            })?;
        }
    }
    let single = Ranking::from_scores("q", [("x", 2.0), ("g", 1.0)], usize::MAX);
    let gold: BTreeSet<String> = ["g".to_string()].into();
    let v = ndcg_at_k(&single, &gold, 10).unwrap();
    ensure(close(v, 0.6309, 5e-5), || format!("rank-2 nDCG {v}"))?;
    Ok(format!("200 instances, max |Δ| = {worst:.1e}; rank-2 nDCG = {v:.4}"))
}

// ---------------------------------------------------------------------------
// fusion

fn random_ranking(rng: &mut ChaCha8Rng, q: &str) -> Ranking {
    let pool = rng.gen_range(2..30);
    let mut ids: Vec<usize> = (0..pool).collect();
    ids.shuffle(rng);
    ids.truncate(rng.gen_range(1..=pool));
    let n = ids.len();
    Ranking::from_scores(q, ids.iter().enumerate().map(|(i, d)| (format!("d{d}"), (n - i) as f64)), usize::MAX)
}

fn fusion_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..100 {
        let pair = [random_ranking(&mut rng, "q"), random_ranking(&mut rng, "q")];
        let k = rng.gen_range(1.0..100.0);
        let rrf = rrf_fuse(&pair, RrfConfig { k }).map_err(|e| e.to_string())?;
        let wrrf = wrrf_fuse(
            &pair,
            &WrrfConfig {
                k,
                weights: vec![0.5, 0.5],
            },
        )
        .map_err(|e| e.to_string())?;
        let a: Vec<&str> = rrf.ids().collect();
        let b: Vec<&str> = wrrf.ids().collect();
        ensure(a == b, || format!("case {case}: orders differ\n{a:?}\n{b:?}"))?;
    }
    let top = [
        Ranking::from_scores("q", [("d", 1.0), ("e", 0.5)], usize::MAX),
        Ranking::from_scores("q", [("d", 0.9)], usize::MAX),
    ];
    let s = rrf_fuse(&top, RrfConfig { k: 5.0 }).unwrap().score_of("d").unwrap();
    ensure(close(s, 1.0 / 3.0, 1e-12), || format!("RRF rank-1 score {s}"))?;
    Ok(format!("100 pairs agree; RRF(1,1; k=5) = {s:.12}"))
}

// ---------------------------------------------------------------------------
// Rocchio

fn rocchio_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let emb = HashingEmbedder::new(128, 3).unwrap();
    let docs: Vec<(String, EmbeddingVector)> = (0..120)
        .map(|i| (format!("d{i:03}"), emb.embed_one(&words(&mut rng, VOCAB, 8))))
        .collect();
    let index = VectorIndex::from_vectors(docs).unwrap();
    let cfg = RocchioConfig {
        alpha: 1.0,
        beta: 0.0,
        feedback_k: 5,
    };
    for i in 0..50 {
        let q = emb.embed_one(&words(&mut rng, VOCAB, 4));
        let qid = format!("q{i}");
        let before = index.knn_search(&qid, &q, usize::MAX).unwrap();
        let moved = rocchio_expand(&q, &before, &index, cfg).unwrap();
        let after = index.knn_search(&qid, &moved, usize::MAX).unwrap();
        ensure(before.ids().eq(after.ids()), || format!("query {i}: order changed"))?;
    }

    let pair = VectorIndex::from_vectors([
        ("a".to_string(), EmbeddingVector::new(vec![0.0, 1.0]).unwrap()),
        ("b".to_string(), EmbeddingVector::new(vec![0.0, 1.0]).unwrap()),
    ])
    .unwrap();
    let initial = Ranking::from_scores("q", [("a", 1.0), ("b", 1.0)], usize::MAX);
    let q = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
    let v = rocchio_expand(
        &q,
        &initial,
        &pair,
        RocchioConfig {
            alpha: 1.0,
            beta: 1.0,
            feedback_k: 2,
        },
    )
    .unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ensure(close(v.values()[0], h, 1e-6) && close(v.values()[1], h, 1e-6), || {
        format!("expanded vector {:?}", v.values())
    })?;
    Ok(format!(
        "50 queries keep their order; expanded = ({:.4}, {:.4})",
        v.values()[0],
        v.values()[1]
    ))
}

// ---------------------------------------------------------------------------
// structure-aware reranking

struct Instance {
    nodes: Vec<String>,
    adj: Vec<Vec<bool>>,
    graph: CitationGraph,
    dense: Ranking,
}

fn random_instance(rng: &mut ChaCha8Rng, emb: &HashingEmbedder) -> Instance {
    let n = rng.gen_range(2..=50);
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
    let p = rng.gen_range(0.0..0.3);
    let mut adj = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.gen_bool(p) {
                adj[s][d] = true;
                edges.push(Edge {
                    src: nodes[s].clone(),
                    dst: nodes[d].clone(),
                    kind: if rng.gen_bool(0.5) { EdgeKind::Hyperlink } else { EdgeKind::Textual },
                });
            }
        }
    }
    let graph = DiGraph::from_edges(nodes.clone(), edges);
    let index = VectorIndex::from_vectors(
        nodes
            .iter()
            .map(|id| (id.clone(), emb.embed_one(&words(rng, VOCAB, 6))))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let q = emb.embed_one(&words(rng, VOCAB, 3));
    let dense = index.knn_search("q", &q, usize::MAX).unwrap();
    Instance {
        nodes,
        adj,
        graph,
        dense,
    }
}

/// Direct evaluation over the adjacency matrix.
fn brute_sar(inst: &Instance, seeds: usize, beta: f64) -> BTreeMap<String, f64> {
    let n = inst.nodes.len();
    let pos: BTreeMap<&str, usize> = inst.nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut score = vec![0.0; n];
    for e in inst.dense.entries() {
        score[pos[e.id.as_str()]] = cosine_to_unit(e.score);
    }
    let seed_idx: Vec<usize> = inst.dense.ids().take(seeds).map(|id| pos[id]).collect();
    let out_deg = |s: usize| (0..n).filter(|&d| inst.adj[s][d]).count() as f64;
    let in_deg = |d: usize| (0..n).filter(|&s| inst.adj[s][d]).count() as f64;
    let mut result = BTreeMap::new();
    for t in 0..n {
        let mut votes = 0.0;
        let mut voted = false;
        for &s in &seed_idx {
            if inst.adj[s][t] {
                voted = true;
                votes += score[s] / (out_deg(s) + 1.0).ln();
            }
        }
        let s = score[t];
        let v = if voted {
            let b = (votes / (in_deg(t) + 1.0).ln()).min(1.0);
            s + beta * b * (1.0 - s)
        } else {
            s
        };
        result.insert(inst.nodes[t].clone(), v);
    }
    result
}

fn sar_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let emb = HashingEmbedder::new(96, 11).unwrap();
    let mut worst = 0f64;
    for case in 0..100 {
        let inst = random_instance(&mut rng, &emb);
        let seeds = rng.gen_range(1..=12);
        let beta = rng.gen_range(0.05..1.0);
        let cfg = SarConfig {
            seed_count: seeds,
            beta,
            score_map: ScoreMap::Cosine,
            ..Default::default()
        };
        let got = sar_rerank(&inst.dense, &inst.graph, &cfg).map_err(|e| format!("case {case}: {e}"))?;
        let want = brute_sar(&inst, seeds, beta);
        ensure(got.len() == want.len(), || format!("case {case}: length {} vs {}", got.len(), want.len()))?;
        for e in got.entries() {
            let w = want[&e.id];
            worst = worst.max((e.score - w).abs());
            ensure(close(e.score, w, 1e-12), || format!("case {case} {}: {} vs {w}", e.id, e.score))?;
        }
        let mut order: Vec<(&String, &f64)> = want.iter().collect();
        order.sort_by(|a, b| b.1.partial_cmp(a.1).unwrap().then(a.0.cmp(b.0)));
        let ids_ok = got.ids().zip(order.iter()).all(|(g, (w, _))| g == w.as_str());
        // orders can only differ on near-ties
        if !ids_ok {
            for (g, (w, ws)) in got.entries().iter().zip(order.iter()) {
                ensure(g.id == **w || close(g.score, **ws, 1e-12), || format!("case {case}: order differs"))?;
            }
        }

        let unit = inst.dense.map_scores(cosine_to_unit);
        let zero = SarConfig {
            beta: 0.0,
            seed_count: seeds,
            ..Default::default()
        };
        let same = sar_rerank(&unit, &inst.graph, &zero).map_err(|e| e.to_string())?;
        let bytes = |r: &Ranking| serde_json::to_vec(r).unwrap();
        ensure(bytes(&same) == bytes(&unit), || format!("case {case}: beta=0 changed the ranking"))?;
    }
    Ok(format!("100 random graphs, max |Δ| = {worst:.1e}; beta=0 is byte-identical"))
}

// ---------------------------------------------------------------------------
// planted gap

fn gap_bench() -> GapBench {
    GapBench::hashing(&PlantedGapConfig::default(), 256, 42).expect("planted bench")
}

fn gap_recovery() -> Check {
    let start = Instant::now();
    let bench = gap_bench();
    let dense = bench.recall(None, 10).map_err(|e| e.to_string())?;
    let cfg = SarConfig {
        beta: 0.5,
        seed_count: 10,
        ..Default::default()
    };
    let sar = bench.recall(Some(&cfg), 10).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let summary = format!(
        "{} docs, {} queries: dense R@10 = {dense:.2}, dense+SAR R@10 = {sar:.2}, {elapsed:.2}s",
        bench.planted.corpus.len(),
        bench.planted.qa.len()
    );
    ensure(dense < 0.2, || format!("dense recall too high; {summary}"))?;
    ensure(sar >= dense + 0.3, || format!("reranking gain too small; {summary}"))?;
    ensure(elapsed < 30.0, || format!("too slow; {summary}"))?;
    Ok(summary)
}

fn bridge_hit_rates() -> Check {
    let bench = gap_bench();
    let h = bench.hit_rates(10, 5).map_err(|e| e.to_string())?;
    let summary = format!("explicit {:.2} vs cosine-kNN(k=5) {:.2}", h.explicit, h.knn);
    ensure(h.explicit > h.knn, || summary.clone())?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// safety protocol

const MARKER: &str = "<<delegated-detail>>";

fn safety_run(spec: &str) -> SafetyReport {
    let (corpus, items) = synthetic_mcq(100, 5, MARKER, 505).unwrap();
    let proto = MockClient::from_spec(spec, &items, 9).unwrap();
    let factory = move || Ok(Box::new(proto.clone()) as Box<dyn AnswerClient>);
    run_safety(
        &items,
        &corpus,
        &ContextMode::ALL,
        &factory,
        SafetyOptions {
            concurrency: 4,
            retries: 1,
            seed: 9,
        },
    )
    .unwrap()
}

fn safety_protocol() -> Check {
    let rule = safety_run(&format!("rule:{MARKER}"));
    let acc = |r: &SafetyReport, m| r.mode(m).unwrap().accuracy;
    let (p, f) = (acc(&rule, ContextMode::Partial), acc(&rule, ContextMode::Full));
    ensure(p == 1.0 && f == 1.0, || format!("rule mock partial {p}, full {f}"))?;
    let always = safety_run("always-answer");
    let ap = acc(&always, ContextMode::Partial);
    ensure(ap == 0.0, || format!("always-answer partial {ap}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in 0..2 {
        let r = safety_run("random");
        let summary = dir.path().join(format!("summary{run}.csv"));
        let items = dir.path().join(format!("items{run}.csv"));
        std::fs::write(&summary, r.to_csv()).unwrap();
        std::fs::write(&items, r.items_csv()).unwrap();
        files.push((std::fs::read(summary).unwrap(), std::fs::read(items).unwrap()));
    }
    ensure(files[0] == files[1], || "repeated runs wrote different CSVs".into())?;
    Ok(format!(
        "rule mock partial {p:.1} / full {f:.1}; always-answer partial {ap:.1}; CSVs identical across runs"
    ))
}

// ---------------------------------------------------------------------------
// sparse scoring and jamo

fn doc(id: &str, text: &str) -> Document {
    Document {
        id: id.into(),
        title: "toy".into(),
        path: vec![],
        text: text.into(),
        links: vec![],
    }
}

fn sparse_formulas() -> Check {
    let corpus = Corpus::from_documents([
        doc("d1", "fire safety code"),
        doc("d2", "fire fire alarm"),
        doc("d3", "building code"),
        doc("d4", "alarm system test system"),
        doc("d5", "safety"),
    ])
    .unwrap();
    let tok = Tokenizer::new(TokenizerConfig::default()).unwrap();
    let index = InvertedIndex::build(&corpus, &tok).unwrap();
    let q = tok.tokenize("fire alarm");

    // N = 5, avgdl = 13/5; "fire" and "alarm" each occur in two documents
    let ln = f64::ln;
    let idf = ln((5.0 - 2.0 + 0.5) / (2.0 + 0.5) + 1.0);
    let part = |tf: f64, dl: f64| idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * dl / 2.6));
    let bm25_expected = [
        ("d1", part(1.0, 3.0)),
        ("d2", part(2.0, 3.0) + part(1.0, 3.0)),
        ("d4", part(1.0, 4.0)),
    ];
    let bm25 = index.bm25_search("q", &q, Bm25Params::default(), 10);
    ensure(bm25.len() == 3, || format!("bm25 returned {} docs", bm25.len()))?;
    for (id, want) in bm25_expected {
        let got = bm25.score_of(id).unwrap_or(f64::NAN);
        ensure(close(got, want, 1e-9), || format!("bm25 {id}: {got} vs {want}"))?;
    }

    let (l25, l5, l2) = (ln(2.5), ln(5.0), ln(2.0));
    let d4_norm = (l25 * l25 + ((1.0 + l2) * l5).powi(2) + l5 * l5).sqrt();
    let tfidf_expected = [
        ("d1", 1.0 / (2f64.sqrt() * 3f64.sqrt())),
        ("d2", (2.0 + l2) / (2f64.sqrt() * ((1.0 + l2).powi(2) + 1.0).sqrt())),
        ("d4", l25 / (2f64.sqrt() * d4_norm)),
    ];
    let tfidf = index.tfidf_search("q", &q, 10);
    ensure(tfidf.len() == 3, || format!("tfidf returned {} docs", tfidf.len()))?;
    for (id, want) in tfidf_expected {
        let got = tfidf.score_of(id).unwrap_or(f64::NAN);
        ensure(close(got, want, 1e-9), || format!("tfidf {id}: {got} vs {want}"))?;
    }

    let j = jamo::syllable_index('한').ok_or("한 did not decompose")?;
    let nfd: Vec<char> = "한".nfd().collect();
    ensure(jamo::decompose("한").chars().eq(nfd.iter().copied()), || "decomposed text differs from NFD".into())?;
    let from_nfd = (
        nfd[0] as u32 - 0x1100,
        nfd[1] as u32 - 0x1161,
        nfd.get(2).map_or(0, |&t| t as u32 - 0x11A7),
    );
    let ours = (j.lead, j.vowel, j.trail);
    ensure(ours == (18, 0, 4) && ours == from_nfd, || format!("jamo {ours:?}, NFD {from_nfd:?}"))?;
    Ok(format!("BM25 and TF-IDF match closed forms to 1e-9; 한 = (L={}, V={}, T={})", ours.0, ours.1, ours.2))
}

fn main() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("metric oracle equivalence", metric_oracle),
        ("fusion identities", fusion_identities),
        ("rocchio identities", rocchio_checks),
        ("reranker brute-force equivalence", sar_equivalence),
        ("planted-gap recovery", gap_recovery),
        ("explicit vs kNN bridge hit rate", bridge_hit_rates),
        ("safety protocol mocks", safety_protocol),
        ("sparse formulas and jamo", sparse_formulas),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
