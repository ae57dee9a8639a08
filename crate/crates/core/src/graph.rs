//! Directed citation graph.
//!
//! Edges come from two sources: the curated `links` of each document
//! (hyperlinks) and references found in document text by regular
//! expressions (textual). A similarity-kNN graph uses the same container
//! with a [`Similarity`] edge marker.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::{BufRead, Write};

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Hyperlink,
    Textual,
}

/// Edge marker for graphs built from embedding similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Out,
    In,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge<K> {
    pub src: String,
    pub dst: String,
    pub kind: K,
}

/// Immutable directed multigraph with typed edges.
///
/// Edges are unique per `(src, dst, kind)`; degrees count distinct
/// `(src, dst)` pairs regardless of kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph<K> {
    nodes: BTreeSet<String>,
    edges: BTreeSet<Edge<K>>,
    out_index: BTreeMap<String, Vec<(String, K)>>,
    in_index: BTreeMap<String, Vec<(String, K)>>,
    out_degree: BTreeMap<String, usize>,
    in_degree: BTreeMap<String, usize>,
}

pub type CitationGraph = DiGraph<EdgeKind>;
pub type SimilarityGraph = DiGraph<Similarity>;

impl<K: Copy + Ord> DiGraph<K> {
    /// Builds the graph, dropping self-loops. Edge endpoints missing from
    /// `nodes` are added.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = String>,
        edges: impl IntoIterator<Item = Edge<K>>,
    ) -> Self {
        let mut nodes: BTreeSet<String> = nodes.into_iter().collect();
        let edges: BTreeSet<Edge<K>> = edges.into_iter().filter(|e| e.src != e.dst).collect();
        let mut out_index: BTreeMap<String, Vec<(String, K)>> = BTreeMap::new();
        let mut in_index: BTreeMap<String, Vec<(String, K)>> = BTreeMap::new();
        let mut pairs = BTreeSet::new();
        for e in &edges {
            nodes.insert(e.src.clone());
            nodes.insert(e.dst.clone());
            out_index
                .entry(e.src.clone())
                .or_default()
                .push((e.dst.clone(), e.kind));
            in_index
                .entry(e.dst.clone())
                .or_default()
                .push((e.src.clone(), e.kind));
            pairs.insert((e.src.as_str(), e.dst.as_str()));
        }
        let mut out_degree: BTreeMap<String, usize> =
            nodes.iter().map(|n| (n.clone(), 0)).collect();
        let mut in_degree = out_degree.clone();
        for (s, d) in pairs {
            *out_degree.get_mut(s).expect("node present") += 1;
            *in_degree.get_mut(d).expect("node present") += 1;
        }
        DiGraph {
            nodes,
            edges,
            out_index,
            in_index,
            out_degree,
            in_degree,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge<K>> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, src: &str, dst: &str) -> bool {
        self.out_index
            .get(src)
            .is_some_and(|v| v.iter().any(|(t, _)| t == dst))
    }

    fn check(&self, node: &str) -> Result<()> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(Error::UnknownNode(node.to_string()))
        }
    }

    pub fn out_edges(&self, node: &str) -> &[(String, K)] {
        self.out_index.get(node).map_or(&[], Vec::as_slice)
    }

    pub fn in_edges(&self, node: &str) -> &[(String, K)] {
        self.in_index.get(node).map_or(&[], Vec::as_slice)
    }

    /// Distinct one-hop neighbours along `direction`, in ascending id order.
    pub fn adjacent(&self, node: &str, direction: Direction) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            out.extend(self.out_edges(node).iter().map(|(t, _)| t.as_str()));
        }
        if matches!(direction, Direction::In | Direction::Both) {
            out.extend(self.in_edges(node).iter().map(|(s, _)| s.as_str()));
        }
        out
    }

    /// Nodes reachable within `hops` steps, excluding `node` itself.
    pub fn neighbors(&self, node: &str, direction: Direction, hops: usize) -> Result<BTreeSet<String>> {
        self.check(node)?;
        if hops == 0 {
            return Err(Error::config("hops must be at least 1"));
        }
        let mut seen: BTreeSet<&str> = BTreeSet::from([node]);
        let mut frontier = VecDeque::from([(node, 0usize)]);
        while let Some((cur, depth)) = frontier.pop_front() {
            if depth == hops {
                continue;
            }
            for next in self.adjacent(cur, direction) {
                if seen.insert(next) {
                    frontier.push_back((next, depth + 1));
                }
            }
        }
        seen.remove(node);
        Ok(seen.into_iter().map(str::to_string).collect())
    }

    /// Distinct-target degree. `Both` counts the union of in- and out-neighbours.
    pub fn degree(&self, node: &str, direction: Direction) -> Result<usize> {
        self.check(node)?;
        Ok(match direction {
            Direction::Out => self.out_degree[node],
            Direction::In => self.in_degree[node],
            Direction::Both => self.adjacent(node, Direction::Both).len(),
        })
    }
}

impl<K: Copy + Ord + Serialize> DiGraph<K> {
    /// One `{"src","dst","kind"}` object per line, in edge order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.edges {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<K: Copy + Ord + DeserializeOwned> DiGraph<K> {
    /// Reads an edge export; `nodes` adds isolated nodes (e.g. corpus ids).
    pub fn read_jsonl<R: BufRead>(reader: R, nodes: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            edges.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(DiGraph::from_edges(nodes, edges))
    }
}

/// Textual-reference rule: a regex with one capture group and a label
/// template. `{}` in the label is replaced with the captured text, and the
/// result is looked up among same-title documents by their path labels.
#[derive(Debug, Clone)]
pub struct RefPattern {
    regex: Regex,
    label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefPatternSpec {
    pub pattern: String,
    pub label: String,
}

impl RefPattern {
    pub fn new(pattern: &str, label: &str) -> Result<Self> {
        let regex = Regex::new(pattern).map_err(|e| Error::Pattern {
            pattern: pattern.to_string(),
            message: e.to_string(),
        })?;
        if regex.captures_len() < 2 {
            return Err(Error::Pattern {
                pattern: pattern.to_string(),
                message: "needs one capture group".into(),
            });
        }
        Ok(RefPattern {
            regex,
            label: label.to_string(),
        })
    }

    pub fn from_spec(spec: &RefPatternSpec) -> Result<Self> {
        Self::new(&spec.pattern, &spec.label)
    }

    pub fn label_for(&self, captured: &str) -> String {
        self.label.replace("{}", captured)
    }
}

pub fn load_patterns(path: impl AsRef<std::path::Path>) -> Result<Vec<RefPattern>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let specs: Vec<RefPatternSpec> =
        serde_json::from_str(&raw).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
    specs.iter().map(RefPattern::from_spec).collect()
}

/// Same-title lookup of path labels. A document matches a label when its
/// last path element equals it; failing that, the document with the
/// shortest path containing the label (ties by id).
struct LabelResolver<'a> {
    exact: HashMap<(&'a str, &'a str), &'a str>,
    contains: HashMap<(&'a str, &'a str), (usize, &'a str)>,
}

impl<'a> LabelResolver<'a> {
    fn new(corpus: &'a Corpus) -> Self {
        let mut exact = HashMap::new();
        let mut contains: HashMap<(&str, &str), (usize, &str)> = HashMap::new();
        // ascending id, so the first insert wins ties
        for doc in corpus.documents() {
            if let Some(last) = doc.path.last() {
                exact
                    .entry((doc.title.as_str(), last.as_str()))
                    .or_insert(doc.id.as_str());
            }
            for label in &doc.path {
                let key = (doc.title.as_str(), label.as_str());
                let cand = (doc.path.len(), doc.id.as_str());
                contains
                    .entry(key)
                    .and_modify(|best| {
                        if cand < *best {
                            *best = cand;
                        }
                    })
                    .or_insert(cand);
            }
        }
        LabelResolver { exact, contains }
    }

    fn resolve(&self, doc: &Document, label: &str) -> Option<&'a str> {
        let key = (doc.title.as_str(), label);
        self.exact
            .get(&key)
            .copied()
            .or_else(|| self.contains.get(&key).map(|(_, id)| *id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnresolvedRef {
    pub source: String,
    pub kind: EdgeKind,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BuildReport {
    pub hyperlink_edges: usize,
    pub textual_edges: usize,
    /// Textual matches that duplicated a hyperlink edge.
    pub suppressed_duplicates: usize,
    pub self_references: usize,
    pub unresolved: Vec<UnresolvedRef>,
}

/// Builds the citation graph from document links and textual references.
pub fn build_graph(corpus: &Corpus, patterns: &[RefPattern]) -> (CitationGraph, BuildReport) {
    let mut report = BuildReport::default();
    let mut hyper: BTreeSet<(String, String)> = BTreeSet::new();
    let mut textual: BTreeSet<(String, String)> = BTreeSet::new();
    let resolver = LabelResolver::new(corpus);

    for doc in corpus.documents() {
        for target in &doc.links {
            if !corpus.contains(target) {
                report.unresolved.push(UnresolvedRef {
                    source: doc.id.clone(),
                    kind: EdgeKind::Hyperlink,
                    reference: target.clone(),
                });
            } else if target == &doc.id {
                report.self_references += 1;
            } else {
                hyper.insert((doc.id.clone(), target.clone()));
            }
        }
    }

    for doc in corpus.documents() {
        for pat in patterns {
            for caps in pat.regex.captures_iter(&doc.text) {
                let Some(captured) = caps.get(1) else { continue };
                let label = pat.label_for(captured.as_str());
                match resolver.resolve(doc, &label) {
                    None => report.unresolved.push(UnresolvedRef {
                        source: doc.id.clone(),
                        kind: EdgeKind::Textual,
                        reference: caps[0].to_string(),
                    }),
                    Some(t) if t == doc.id => report.self_references += 1,
                    Some(t) => {
                        let pair = (doc.id.clone(), t.to_string());
                        if hyper.contains(&pair) {
                            report.suppressed_duplicates += 1;
                        } else {
                            textual.insert(pair);
                        }
                    }
                }
            }
        }
    }

    report.hyperlink_edges = hyper.len();
    report.textual_edges = textual.len();
    let edges = hyper
        .into_iter()
        .map(|(src, dst)| Edge {
            src,
            dst,
            kind: EdgeKind::Hyperlink,
        })
        .chain(textual.into_iter().map(|(src, dst)| Edge {
            src,
            dst,
            kind: EdgeKind::Textual,
        }));
    let graph = DiGraph::from_edges(corpus.ids().map(str::to_string), edges);
    (graph, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, title: &str, path: &[&str], text: &str, links: &[&str]) -> Document {
        Document {
            id: id.into(),
            title: title.into(),
            path: path.iter().map(|s| s.to_string()).collect(),
            text: text.into(),
            links: links.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn chain() -> CitationGraph {
        let e = |s: &str, d: &str| Edge {
            src: s.into(),
            dst: d.into(),
            kind: EdgeKind::Hyperlink,
        };
        DiGraph::from_edges(Vec::<String>::new(), [e("A", "B"), e("B", "C")])
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hyperlink_edge() {
        let c = Corpus::from_documents([
            doc("A", "T", &["T", "Article 1"], "x", &["B"]),
            doc("B", "T", &["T", "Article 2"], "y", &[]),
        ])
        .unwrap();
        let (g, report) = build_graph(&c, &[]);
        assert_eq!(
            g.edges().cloned().collect::<Vec<_>>(),
            vec![Edge {
                src: "A".into(),
                dst: "B".into(),
                kind: EdgeKind::Hyperlink
            }]
        );
        assert!(report.unresolved.is_empty());
    }

    #[test]
    fn textual_reference_resolves_within_title() {
        let c = Corpus::from_documents([
            doc("A", "T", &["T", "Article 1"], "pursuant to Article 5", &[]),
            doc("B", "T", &["T", "Article 5"], "y", &[]),
            doc("C", "Other", &["Other", "Article 5"], "z", &[]),
        ])
        .unwrap();
        let pats = [RefPattern::new(r"Article (\d+)", "Article {}").unwrap()];
        let (g, _) = build_graph(&c, &pats);
        let edges: Vec<_> = g.edges().cloned().collect();
        assert_eq!(
            edges,
            vec![Edge {
                src: "A".into(),
                dst: "B".into(),
                kind: EdgeKind::Textual
            }]
        );
    }

    #[test]
    fn textual_duplicate_of_hyperlink_is_suppressed() {
        let c = Corpus::from_documents([
            doc("A", "T", &["T", "Article 1"], "see Article 5", &["B"]),
            doc("B", "T", &["T", "Article 5"], "y", &[]),
        ])
        .unwrap();
        let pats = [RefPattern::new(r"Article (\d+)", "Article {}").unwrap()];
        let (g, report) = build_graph(&c, &pats);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges().next().unwrap().kind, EdgeKind::Hyperlink);
        assert_eq!(report.suppressed_duplicates, 1);
    }

    #[test]
    fn self_references_and_unresolved_are_reported() {
        let c = Corpus::from_documents([doc(
            "A",
            "T",
            &["T", "Article 1"],
            "see Article 1 and Article 9",
            &["A", "Building Act 3"],
        )])
        .unwrap();
        let pats = [RefPattern::new(r"Article (\d+)", "Article {}").unwrap()];
        let (g, report) = build_graph(&c, &pats);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(report.self_references, 2);
        assert_eq!(report.unresolved.len(), 2);
    }

    #[test]
    fn pattern_requires_capture_group() {
        assert!(RefPattern::new("Article", "x").is_err());
        assert!(RefPattern::new("(", "x").is_err());
    }

    #[test]
    fn label_falls_back_to_containing_path() {
        let c = Corpus::from_documents([
            doc("A", "T", &["T", "Article 1"], "see Article 5", &[]),
            doc("B2", "T", &["T", "Article 5", "Paragraph 2"], "y", &[]),
            doc("B1", "T", &["T", "Article 5", "Paragraph 1"], "y", &[]),
        ])
        .unwrap();
        let pats = [RefPattern::new(r"Article (\d+)", "Article {}").unwrap()];
        let (g, _) = build_graph(&c, &pats);
        assert!(g.has_edge("A", "B1"));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn chain_neighbors() {
        let g = chain();
        assert_eq!(g.neighbors("A", Direction::Out, 1).unwrap(), set(&["B"]));
        assert_eq!(g.neighbors("A", Direction::Out, 2).unwrap(), set(&["B", "C"]));
        assert_eq!(g.neighbors("C", Direction::Out, 2).unwrap(), set(&[]));
        assert_eq!(g.neighbors("C", Direction::In, 1).unwrap(), set(&["B"]));
        assert_eq!(g.neighbors("B", Direction::Both, 1).unwrap(), set(&["A", "C"]));
        assert!(matches!(
            g.neighbors("Q", Direction::Out, 1),
            Err(Error::UnknownNode(ref n)) if n == "Q"
        ));
    }

    #[test]
    fn star_degrees() {
        let edges = (1..=5).map(|i| Edge {
            src: "H".to_string(),
            dst: format!("X{i}"),
            kind: EdgeKind::Hyperlink,
        });
        let g = DiGraph::from_edges(["lonely".to_string()], edges);
        assert_eq!(g.degree("H", Direction::Out).unwrap(), 5);
        assert_eq!(g.degree("X1", Direction::In).unwrap(), 1);
        assert_eq!(g.degree("lonely", Direction::In).unwrap(), 0);
        assert_eq!(g.degree("lonely", Direction::Out).unwrap(), 0);
    }

    #[test]
    fn degrees_collapse_kinds() {
        let g = DiGraph::from_edges(
            Vec::<String>::new(),
            [
                Edge { src: "A".to_string(), dst: "B".to_string(), kind: EdgeKind::Hyperlink },
                Edge { src: "A".to_string(), dst: "B".to_string(), kind: EdgeKind::Textual },
            ],
        );
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degree("A", Direction::Out).unwrap(), 1);
        assert_eq!(g.degree("B", Direction::In).unwrap(), 1);
    }

    #[test]
    fn jsonl_export_roundtrip() {
        let g = chain();
        let mut buf = Vec::new();
        g.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"src":"A","dst":"B","kind":"hyperlink"}"#));
        let back = CitationGraph::read_jsonl(buf.as_slice(), Vec::new()).unwrap();
        assert_eq!(back, g);
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<Document>> {
        (2usize..15).prop_flat_map(|n| {
            prop::collection::vec(
                (prop::collection::vec(0..n, 0..4), prop::collection::vec(0..n, 0..3)),
                n,
            )
            .prop_map(move |rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (links, refs))| {
                        let text = refs
                            .iter()
                            .map(|r| format!("see Article {r}"))
                            .collect::<Vec<_>>()
                            .join(" ");
                        Document {
                            id: format!("D{i:02}"),
                            title: "T".into(),
                            path: vec!["T".into(), format!("Article {i}")],
                            text: format!("body {text}"),
                            links: links.iter().map(|l| format!("D{l:02}")).collect(),
                        }
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn graph_invariants(docs in arb_corpus(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let pats = [RefPattern::new(r"Article (\d+)", "Article {}").unwrap()];
            let c = Corpus::from_documents(docs.clone()).unwrap();
            let (g, _) = build_graph(&c, &pats);

            let out_sum: usize = g.nodes().map(|n| g.degree(n, Direction::Out).unwrap()).sum();
            let in_sum: usize = g.nodes().map(|n| g.degree(n, Direction::In).unwrap()).sum();
            prop_assert_eq!(out_sum, g.edge_count());
            prop_assert_eq!(in_sum, g.edge_count());

            for n in g.nodes() {
                prop_assert!(!g.has_edge(n, n));
                let one = g.neighbors(n, Direction::Out, 1).unwrap();
                let idx: BTreeSet<String> = g.out_edges(n).iter().map(|(t, _)| t.clone()).collect();
                prop_assert_eq!(&one, &idx);
                let two = g.neighbors(n, Direction::Out, 2).unwrap();
                prop_assert!(two.is_superset(&one));
            }

            let mut shuffled = docs;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let c2 = Corpus::from_documents(shuffled).unwrap();
            let (g2, _) = build_graph(&c2, &pats);
            prop_assert_eq!(&g2, &g);
            let (g3, _) = build_graph(&c, &pats);
            prop_assert_eq!(g3, g);
        }
    }
}
