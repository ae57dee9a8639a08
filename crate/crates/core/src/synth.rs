//! Seeded synthetic corpora.
//!
//! [`planted_gap`] builds a statute-like hierarchy in which every query's
//! answer sits in a document that shares no vocabulary with the query but
//! is cited by a document that does. [`synthetic_mcq`] builds two-document
//! multiple-choice items whose second document carries a marker string.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, McqItem, QaPair};
use crate::error::{Error, Result};
use crate::graph::RefPattern;

pub const ABSTAIN_OPTION: &str = "Cannot be determined with the given information";

const COMMON_WORDS: &[&str] = &[
    "shall", "provided", "pursuant", "person", "building", "apply", "under", "except",
    "installed", "required", "standard", "facility", "operator", "means", "within",
];

/// Generates unique pronounceable pseudo-words.
struct Words {
    used: HashSet<String>,
}

impl Words {
    fn new() -> Self {
        Words {
            used: COMMON_WORDS.iter().map(|w| w.to_string()).collect(),
        }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        const C: &[u8] = b"bcdfghjklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let syllables = rng.gen_range(3..=4);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(C[rng.gen_range(0..C.len())] as char);
                w.push(V[rng.gen_range(0..V.len())] as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn many(&mut self, rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh(rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedGapConfig {
    pub docs: usize,
    pub queries: usize,
    pub titles: usize,
    /// Topic words per query; the entry document contains all of them.
    pub topic_words: usize,
    /// Topic words the query uses.
    pub query_words: usize,
    /// Documents per query that share a few topic words.
    pub distractors: usize,
    pub seed: u64,
}

impl Default for PlantedGapConfig {
    fn default() -> Self {
        PlantedGapConfig {
            docs: 500,
            queries: 50,
            titles: 10,
            topic_words: 8,
            query_words: 5,
            distractors: 2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    pub qa: Vec<QaPair>,
    /// Entry document per query, parallel to `qa`.
    pub entries: Vec<String>,
}

/// The reference pattern the planted corpus uses for textual citations.
pub fn article_pattern() -> RefPattern {
    RefPattern::new(r"Article (\d+)", "Article {}").expect("static pattern")
}

/// Roles in one title's article numbering.
#[derive(Clone, Copy, PartialEq)]
enum Role {
    Hub,
    Entry(usize),
    Gold(usize),
    Distractor(usize),
    Filler,
}

pub fn planted_gap(cfg: &PlantedGapConfig) -> Result<PlantedCorpus> {
    let special = cfg.titles + cfg.queries * (2 + cfg.distractors);
    if cfg.titles == 0 || cfg.docs < special || cfg.query_words > cfg.topic_words || cfg.query_words == 0 {
        return Err(Error::config(format!(
            "planted corpus needs docs >= {special}, titles >= 1 and 1 <= query_words <= topic_words"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut words = Words::new();

    let mut roles = Vec::with_capacity(cfg.docs);
    for t in 0..cfg.titles {
        roles.push((t, Role::Hub));
    }
    for q in 0..cfg.queries {
        roles.push((q % cfg.titles, Role::Entry(q)));
        roles.push((rng.gen_range(0..cfg.titles), Role::Gold(q)));
        for _ in 0..cfg.distractors {
            roles.push((rng.gen_range(0..cfg.titles), Role::Distractor(q)));
        }
    }
    while roles.len() < cfg.docs {
        roles.push((rng.gen_range(0..cfg.titles), Role::Filler));
    }
    // hubs keep Article 1; everything else is numbered in shuffled order
    let (hubs, mut rest): (Vec<_>, Vec<_>) = roles.into_iter().partition(|(_, r)| *r == Role::Hub);
    rest.shuffle(&mut rng);

    let title_name = |t: usize| format!("Statute {t:02}");
    let mut next_article = vec![2usize; cfg.titles];
    let mut placed: Vec<(usize, usize, Role)> = hubs.iter().map(|(t, r)| (*t, 1, *r)).collect();
    for (t, r) in rest {
        placed.push((t, next_article[t], r));
        next_article[t] += 1;
    }
    let id_of = |t: usize, a: usize| format!("S{t:02}-A{a:03}");

    let topics: Vec<Vec<String>> = (0..cfg.queries).map(|_| words.many(&mut rng, cfg.topic_words)).collect();
    let background = words.many(&mut rng, 400);

    let mut entry_ids = vec![String::new(); cfg.queries];
    let mut gold_ids = vec![String::new(); cfg.queries];
    for &(t, a, r) in &placed {
        match r {
            Role::Entry(q) => entry_ids[q] = id_of(t, a),
            Role::Gold(q) => gold_ids[q] = id_of(t, a),
            _ => {}
        }
    }
    let fillers: Vec<(usize, usize)> = placed
        .iter()
        .filter(|(_, _, r)| *r == Role::Filler)
        .map(|&(t, a, _)| (t, a))
        .collect();

    let pick_common = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n).map(|_| COMMON_WORDS[rng.gen_range(0..COMMON_WORDS.len())].to_string()).collect()
    };

    let mut docs = Vec::with_capacity(cfg.docs);
    for &(t, a, role) in &placed {
        let mut body: Vec<String> = pick_common(&mut rng, 3);
        let mut links = Vec::new();
        let hub = id_of(t, 1);
        match role {
            Role::Hub => {
                body.extend(words.many(&mut rng, 10));
            }
            Role::Entry(q) => {
                body.extend(topics[q].iter().cloned());
                links.push(gold_ids[q].clone());
                links.push(hub);
            }
            Role::Gold(_) => {
                body.extend(words.many(&mut rng, 12));
                links.push(hub);
            }
            Role::Distractor(q) => {
                let k = rng.gen_range(2..=3);
                body.extend(topics[q].choose_multiple(&mut rng, k).cloned());
                body.extend((0..6).map(|_| background.choose(&mut rng).unwrap().clone()));
                links.push(hub);
            }
            Role::Filler => {
                body.extend((0..10).map(|_| background.choose(&mut rng).unwrap().clone()));
                if rng.gen_bool(0.7) {
                    links.push(hub);
                }
                // textual reference to another filler of the same title
                let same: Vec<&(usize, usize)> =
                    fillers.iter().filter(|(ft, fa)| *ft == t && *fa != a).collect();
                if let Some(&&(_, target)) = same.choose(&mut rng) {
                    body.push(format!("see Article {target}"));
                }
                if let Some(&(ft, fa)) = fillers.choose(&mut rng) {
                    if (ft, fa) != (t, a) {
                        links.push(id_of(ft, fa));
                    }
                }
            }
        }
        body.shuffle(&mut rng);
        links.dedup();
        docs.push(Document {
            id: id_of(t, a),
            title: title_name(t),
            path: vec![title_name(t), format!("Article {a}")],
            text: body.join(" "),
            links,
        });
    }

    let qa = (0..cfg.queries)
        .map(|q| {
            let picked: Vec<String> = topics[q].choose_multiple(&mut rng, cfg.query_words).cloned().collect();
            QaPair {
                qid: format!("q{q:03}"),
                question: picked.join(" "),
                gold_answer: String::new(),
                matched_doc_ids: vec![gold_ids[q].clone()],
                related_doc_ids: vec![entry_ids[q].clone()],
            }
        })
        .collect();

    Ok(PlantedCorpus {
        corpus: Corpus::from_documents(docs)?,
        qa,
        entries: entry_ids,
    })
}

/// Two documents per item; only `doc_b` contains `marker`. The abstain
/// option sits at a random position.
pub fn synthetic_mcq(items: usize, options: usize, marker: &str, seed: u64) -> Result<(Corpus, Vec<McqItem>)> {
    if options < 3 {
        return Err(Error::config("synthetic MCQ needs at least 3 options"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Words::new();
    let mut docs = Vec::with_capacity(items * 2);
    let mut out = Vec::with_capacity(items);
    for i in 0..items {
        let a_id = format!("M{i:03}-A");
        let b_id = format!("M{i:03}-B");
        let answers = words.many(&mut rng, options - 1);
        let abstain = rng.gen_range(0..options);
        let mut opts = answers.clone();
        opts.insert(abstain, ABSTAIN_OPTION.to_string());
        let answer = loop {
            let a = rng.gen_range(0..options);
            if a != abstain {
                break a;
            }
        };
        let subject = words.fresh(&mut rng);
        docs.push(Document {
            id: a_id.clone(),
            title: format!("Act {i:03}"),
            path: vec![format!("Act {i:03}"), "Article 1".into()],
            text: format!("the {subject} shall follow the detailed standard set by the subordinate rule"),
            links: vec![b_id.clone()],
        });
        docs.push(Document {
            id: b_id.clone(),
            title: format!("Rule {i:03}"),
            path: vec![format!("Rule {i:03}"), "Article 1".into()],
            text: format!("{marker} the detailed standard for {subject} is {}", opts[answer]),
            links: vec![],
        });
        out.push(McqItem {
            qid: format!("m{i:03}"),
            question: format!("Which standard applies to {subject}?"),
            options: opts,
            abstain_index: abstain,
            answer_full: answer,
            answer_partial: abstain,
            doc_a_id: a_id,
            doc_b_id: b_id,
        });
    }
    let corpus = Corpus::from_documents(docs)?;
    for item in &out {
        item.validate(&corpus)?;
    }
    Ok((corpus, out))
}
